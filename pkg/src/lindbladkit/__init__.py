"""Open-system dynamics toolkit."""
