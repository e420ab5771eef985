"""Dipolar XY simulator for light-shift-controlled Rydberg tweezer triangles."""

__version__ = "0.1.0"
