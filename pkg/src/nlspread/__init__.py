"""Spreading speeds and periodic traveling waves for nonlocal KPP equations
with time-space periodic coefficients (one space dimension)."""

__version__ = "0.1.0"
