"""Handwritten Urdu digit and character recognition with sparse autoencoders and CNNs."""

__version__ = "0.1.0"
