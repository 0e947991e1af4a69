"""relcast: trained compact models for soft-error and functional-safety metrics."""

__version__ = "0.1.0"
