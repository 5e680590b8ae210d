"""Sampling unnormalized densities by stochastic localization with MCMC denoisers."""

__version__ = "0.1.0"
