"""hypbq: Boussinesq mild solutions on discretized hyperbolic space."""

__version__ = "0.1.0"
