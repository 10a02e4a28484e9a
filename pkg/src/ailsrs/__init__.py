"""Adversarial imitation learning with linear policies and random search."""

__version__ = "0.1.0"
