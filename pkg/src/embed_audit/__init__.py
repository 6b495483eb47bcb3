"""Desk-scale privacy auditing of embeddings: membership and property
inference, whitebox inversion, and a noisy self-distillation defense."""

__version__ = "0.1.0"
