"""MTW tests package."""
