"""Observation model."""
