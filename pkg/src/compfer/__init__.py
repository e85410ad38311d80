"""Compressed-domain facial expression recognition at desk scale."""

__version__ = "0.1.0"
