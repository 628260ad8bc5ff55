"""Linear systems and Riccati solvers."""
