"""Stabilized isogeometric Stokes solver on trimmed 2D geometries."""

__version__ = "0.1.0"
