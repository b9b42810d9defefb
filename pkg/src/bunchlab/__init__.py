"""bunchlab: asynchronous multi-agent holding control on a simulated bus route."""

__version__ = "0.1.0"
