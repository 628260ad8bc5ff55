"""Channel models and bundled channel files."""
