"""Diffusion sampling by windowed Chebyshev collocation of the probability flow ODE.

Targets are atomic priors smoothed by isotropic Gaussian noise, for which scores
are exact; oracles wrap them with a controlled error field.
"""

__version__ = "0.1.0"
