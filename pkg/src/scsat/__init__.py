"""Coupled density evolution, generalized potentials, continuum limits and SC BICM-ID EXIT analysis."""

__version__ = "0.1.0"
