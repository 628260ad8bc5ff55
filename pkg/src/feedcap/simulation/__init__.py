"""Monte Carlo transmission experiments."""
