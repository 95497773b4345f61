"""Continual learning for multivariate time-series regression.

The toolkit covers the full loop: change-point detection on piecewise-
linear output channels, selection of replay representatives across
channels, autoregressive forecasters with exact gradients, continual
training with gradient projection against a replay memory, and split
conformal intervals around the forecasts.
"""

__version__ = "0.1.0"
