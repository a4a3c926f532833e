"""Delay-optimal power control for an energy-harvesting link."""

__version__ = "0.1.0"
