"""Tests for HomeAI Assistant."""
