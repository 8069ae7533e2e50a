"""Kronecker-structured linear algebra."""
