"""Data augmentation versus explicit regularization: augmentation engine, numpy CNN core and ablation harness."""

__version__ = "0.1.0"
