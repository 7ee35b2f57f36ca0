"""Synthetic glucose traces from a motif-guided recurrent GAN, with optional differential privacy."""

__version__ = "0.1.0"
