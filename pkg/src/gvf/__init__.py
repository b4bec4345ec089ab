"""Guided visual foresight on a 2D tabletop.

A desk-scale pipeline for pixel-goal tool-use planning: a deterministic
top-down simulator generates demonstration and random-interaction data, a
flow-based video predictor and an autoregressive Gaussian-mixture action
proposal are trained on it, and a CEM planner warm-started by the proposal
solves user-specified pixel goals via model-predictive control.
"""

__version__ = "0.1.0"
