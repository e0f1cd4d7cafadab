# Robust stochastic convex optimization under epsilon-contamination
__version__ = "0.1.0"
