"""Dense and sparse random graph models, spectral embeddings and graph neural networks."""

__version__ = "0.1.0"
