"""Point-based segmentation rendering on analytic scenes."""

__version__ = "0.1.0"
