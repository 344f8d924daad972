"""Braking-resistor transient study toolkit for large load clusters."""

__version__ = "0.1.0"
