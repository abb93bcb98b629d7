"""selfpose application package."""
