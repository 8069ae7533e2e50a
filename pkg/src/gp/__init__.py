"""Interpolated, variational GP layer."""
