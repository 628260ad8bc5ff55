"""
Feedback capacity of Gaussian ISI channels: capacity optimization,
Kalman-filter coding and Monte Carlo validation.
"""

__version__ = "0.1.0"
