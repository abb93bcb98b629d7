"""Self-supervised category-level pose and size estimation."""
