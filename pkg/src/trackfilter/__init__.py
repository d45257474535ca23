"""Spectral 1-bit filter for toy-detector track finding, with an exact gate
synthesis of the controlled time evolution and a statevector simulator."""

__version__ = "0.1.0"
