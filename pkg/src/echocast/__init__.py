"""Sparse stochastic echo-state forecasting with post hoc calibration,
joint-dependence modeling, spatial interpolation, and exposure aggregation."""

__version__ = "0.1.0"
