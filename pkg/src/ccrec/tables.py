"""Dense embedding tables keyed by node index."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EmbeddingTable:
    """Row-per-node matrix plus its training contract.

    `matrix` is (node_count, dim); dtype is float32 for tables read
    verbatim from embedding files, float64 for trainable state.
    """

    matrix: np.ndarray
    trainable: bool = False
    node_kind: str = "item"  # "user" | "item"

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got shape {self.matrix.shape}")
        if self.node_kind not in ("user", "item"):
            raise ValueError(f"node_kind must be 'user' or 'item', got {self.node_kind!r}")

    @property
    def node_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def assert_finite(self) -> None:
        if not np.isfinite(self.matrix).all():
            raise ValueError(f"{self.node_kind} embedding table contains NaN/Inf")


def gaussian_table(node_count: int, dim: int, scale: float, seed, node_kind: str) -> EmbeddingTable:
    """Trainable table initialized from N(0, scale^2)."""
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0.0, scale, size=(node_count, dim))
    return EmbeddingTable(matrix=matrix, trainable=True, node_kind=node_kind)
