"""Lindblad tomography: SPAM, Kraus and Lindblad estimation from shot counts."""

__version__ = "0.1.0"
