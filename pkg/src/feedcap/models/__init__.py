"""Capacity optimization, coding scheme and finite-horizon oracles."""
