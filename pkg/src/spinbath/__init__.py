"""Exact dynamics of a central spin coupled to an all-to-all spin bath."""

__version__ = "0.1.0"
