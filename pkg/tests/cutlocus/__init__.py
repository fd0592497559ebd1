"""Cut locus tests package."""
