"""Real-time reachability safety assurance for a small-scale car model."""

__version__ = "0.1.0"
