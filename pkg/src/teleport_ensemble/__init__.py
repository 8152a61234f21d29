"""Teleporting-walker ensemble MCMC, its mean-field limit and exact finite-state checks."""

__version__ = "0.1.0"
