"""Multimodal (image feature + text) sentiment classifiers on a small autodiff core."""

__version__ = "0.1.0"
