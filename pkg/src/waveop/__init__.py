"""Wave operators of Schrödinger operators on R^3: structure formula, Cook's method and checks."""

__all__ = ["__version__"]
__version__ = "0.1.0"
