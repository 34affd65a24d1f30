"""Dynamics-aware evidential occupancy grids: representation, segmentation,
double-prong prediction and evaluation on ego-centred 2-D grids."""

__version__ = "0.1.0"
