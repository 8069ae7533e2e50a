"""Model assembly and training loop."""
