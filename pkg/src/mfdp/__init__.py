"""Matrix-factorization mechanisms for private streams with multiple participations."""

__version__ = "0.1.0"
