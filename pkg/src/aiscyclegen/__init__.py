"""Unpaired CycleGAN translation and augmentation of AIS vessel time series."""

__version__ = "0.1.0"
