"""Dynamic grid simulation with an online feedback optimization controller."""

__version__ = "0.1.0"
