"""Exact and kernel SHAP on finite grids, with extended-support aggregation."""

__version__ = "0.1.0"
