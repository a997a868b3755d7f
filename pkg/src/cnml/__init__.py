"""Contrastive learning of circuit and LTL specification embeddings."""

__version__ = "0.1.0"
