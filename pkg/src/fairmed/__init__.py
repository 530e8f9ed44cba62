"""Fair representation k-median clustering via tree embeddings."""
