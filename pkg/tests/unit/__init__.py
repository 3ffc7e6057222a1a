"""vicloud unit tests."""
