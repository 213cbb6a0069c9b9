"""Align power-system bus models with geospatial grid asset records."""

__version__ = "0.1.0"
