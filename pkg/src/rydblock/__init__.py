"""Two-atom Rydberg blockade: pair interactions, blockade shift and experiment simulation."""

__version__ = "0.1.0"
