"""Feature network and optimizers."""
