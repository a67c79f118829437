"""Piecewise deterministic Markov processes: simulation, couplings, kernels
and nonparametric estimation of inter-jump densities."""

__version__ = "0.1.0"
