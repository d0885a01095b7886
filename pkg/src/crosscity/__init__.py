"""Adversarial cross-city traffic forecasting.

Domain-invariant graph node embeddings learned adversarially across road
networks, fused into an embedding-augmented recurrent forecaster, trained
with a pre-train/fine-tune transfer protocol.
"""

__version__ = "0.1.0"
