"""Zeros of successive derivatives of hyperexponential functions."""

__version__ = "0.1.0"
