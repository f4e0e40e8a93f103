"""Forward and inverse numerics for curved quantum waveguides."""

__version__ = "0.1.0"
