"""
MVAM - Main Package

A multi-label document classifier that aligns a convolutional view of the
document with a self-attention view of the label set, built on a small
numpy autodiff core.
"""

__version__ = "1.0.0"
__author__ = "MVAM Team"
__description__ = "Multi-view label alignment for multi-label text classification"
