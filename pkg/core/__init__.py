"""Core modules: video records, data access, clip sampling and the F5C model."""
