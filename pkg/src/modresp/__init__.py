"""Modulation-frequency response measurement of pitch extractors."""

__version__ = "0.1.0"
