"""Toy-scale skin lesion classification: two small CNNs fused at score level."""

__version__ = "0.1.0"
