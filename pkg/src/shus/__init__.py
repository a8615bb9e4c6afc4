"""Adaptive stratified importance sampling (SHUS / generalized Wang-Landau)."""

__version__ = "0.1.0"
