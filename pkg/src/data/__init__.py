"""Dataset ingestion and model checkpoints."""
