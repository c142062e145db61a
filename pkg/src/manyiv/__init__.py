"""manyiv - estimation and weak-identification-robust inference with many instruments."""

__version__ = "0.1.0"
