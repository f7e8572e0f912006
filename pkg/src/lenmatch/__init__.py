"""Gridless, obstacle-aware length matching for PCB traces."""

__version__ = "0.1.0"
