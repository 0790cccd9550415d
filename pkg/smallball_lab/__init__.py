"""Small-deviation probabilities of Gaussian processes: models, bounds and Monte Carlo checks."""

__version__ = "0.1"
