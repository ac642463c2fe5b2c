"""Berth localization from AIS positions with footprint augmentation and MDL-selected Gaussian mixtures."""

__version__ = "0.1.0"
