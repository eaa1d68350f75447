"""Desk-scale NAS toolkit: mixture-of-supernets training, collapse, and search."""

__version__ = "0.1.0"
