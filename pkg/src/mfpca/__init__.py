"""Sparse multivariate functional PCA from noisy grid observations.

Pipeline: smooth grid observations into a histogram basis, form the empirical
second-moment operator of the smoothed coefficients, and recover the leading
principal direction with an l1-penalized, doubly ball-constrained M-estimator,
with tuning rules, discretization diagnostics, minimax test constructions, and
a Monte Carlo sweep harness around it.
"""

__version__ = "0.1.0"
