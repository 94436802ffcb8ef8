"""Bridges trained torch classifiers to the activation-vector core:
hook-based extraction, gradient-sign perturbation, and degradation
corpus generation."""

from .corrupt import rotate_series, salt_pepper
from .extract import ExtractionConfig, extract_kav, probe_dim
from .perturb import perturb
from .toy import TinyConvNet

__version__ = "0.1.0"

__all__ = ["ExtractionConfig", "TinyConvNet", "extract_kav", "perturb",
           "probe_dim", "rotate_series", "salt_pepper"]
