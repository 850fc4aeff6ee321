"""Mean and covariance propagation for stochastic systems on matrix Lie groups."""

__version__ = "0.1.0"
