"""Planted-cluster synthetic data for tests and acceptance runs.

Items get Gaussian-blob embeddings around per-cluster centers; each user
belongs to one cluster and interacts with any item of its own cluster
with probability p_in, any other item with probability p_out.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import write_embedding_file


@dataclass
class SynthConfig:
    users: int = 200
    items: int = 120
    clusters: int = 4
    dim: int = 16
    p_in: float = 0.3
    p_out: float = 0.01
    seed: int = 0
    center_scale: float = 1.0
    noise_scale: float = 0.3
    # shared component packing all items into a narrow cone, the way text
    # encoders bunch their outputs; cluster identity lives in the residual
    offset_scale: float = 3.0

    def validate(self) -> list:
        problems = []
        if self.users < 1 or self.items < 1:
            problems.append("users and items must be >= 1")
        if not (1 <= self.clusters <= min(self.users, self.items)):
            problems.append(
                f"clusters must be in [1, min(users, items)], got {self.clusters}"
            )
        if self.dim < 1:
            problems.append(f"dim must be >= 1, got {self.dim}")
        for name, p in (("p_in", self.p_in), ("p_out", self.p_out)):
            if not (0.0 <= p <= 1.0):
                problems.append(f"{name} must be in [0,1], got {p}")
        return problems


def _block_assignment(count: int, clusters: int) -> np.ndarray:
    """Contiguous, balanced cluster blocks: node n -> n*clusters // count."""
    return (np.arange(count) * clusters) // count


def generate(config: SynthConfig):
    """-> (interaction lines, item ids, item embedding matrix, assignments)."""
    problems = config.validate()
    if problems:
        raise ValueError("; ".join(problems))
    seed_centers, seed_noise, seed_edges = np.random.SeedSequence(config.seed).spawn(3)

    user_cluster = _block_assignment(config.users, config.clusters)
    item_cluster = _block_assignment(config.items, config.clusters)

    center_rng = np.random.default_rng(seed_centers)
    offset = center_rng.normal(0.0, config.offset_scale, size=config.dim)
    centers = offset + center_rng.normal(
        0.0, config.center_scale, size=(config.clusters, config.dim)
    )
    noise = np.random.default_rng(seed_noise).normal(
        0.0, config.noise_scale, size=(config.items, config.dim)
    )
    item_matrix = (centers[item_cluster] + noise).astype(np.float32)

    probs = np.where(
        user_cluster[:, None] == item_cluster[None, :], config.p_in, config.p_out
    )
    draws = np.random.default_rng(seed_edges).random(size=(config.users, config.items))
    users, items = np.nonzero(draws < probs)

    user_ids = [f"u{u:05d}" for u in range(config.users)]
    item_ids = [f"i{i:05d}" for i in range(config.items)]
    lines = [f"{user_ids[u]}\t{item_ids[i]}" for u, i in zip(users, items)]
    return lines, item_ids, item_matrix, (user_cluster, item_cluster)


def write_dataset(out_dir, config: SynthConfig):
    """Write interactions.tsv + items.ccemb; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines, item_ids, item_matrix, _ = generate(config)
    inter_path = out_dir / "interactions.tsv"
    with open(inter_path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    emb_path = out_dir / "items.ccemb"
    write_embedding_file(emb_path, item_ids, item_matrix)
    return inter_path, emb_path
