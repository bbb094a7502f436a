"""Multi-robot traffic management on layered cost maps."""

__version__ = "0.1.0"
