"""Rendering of simulator metric CSVs into publication-style figures."""

__version__ = "0.1.0"
