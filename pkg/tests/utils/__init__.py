"""Utils tests package."""
