"""Blueprint-driven multi-scene video pipeline and its evaluation harness."""

__version__ = "0.1.0"
