"""Grid construction and base kernels."""
