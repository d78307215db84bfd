"""Desk-scale tendon-sheath mechanism simulator with dither-assisted
hysteresis reduction and a learned inverse-model compensator."""

__version__ = "0.1.0"
