"""Dual diffusion bridges for unpaired instrument timbre transfer at desk scale."""

__version__ = "0.1.0"
