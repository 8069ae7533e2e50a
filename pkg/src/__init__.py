"""Stochastic variational deep kernel learning package."""
