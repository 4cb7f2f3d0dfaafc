"""Collaborative-contextual recommender.

Aligns trainable user embeddings into a frozen item text-embedding
space, then adapts item embeddings with an MLP under frozen users; warm
scoring uses the adapted items, cold-start scoring the raw contextual
vectors.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
