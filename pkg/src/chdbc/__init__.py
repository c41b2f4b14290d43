"""Bulk-surface Cahn-Hilliard equation with dynamic boundary conditions and singular potentials."""

__version__ = "0.1.0"
