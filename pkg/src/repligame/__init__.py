"""repligame - Generalized replicator dynamics and their discounted mean field game limit."""

__version__ = "0.1.0"
