"""Residual embedding propagation over the bipartite interaction graph.

One layer adds each node's degree-normalized neighbor sum onto its own
embedding; zero-degree nodes pass through unchanged. The layer map is
linear and symmetric in the normalized adjacency, so the adjoint used
for backpropagation is propagation itself.
"""

from __future__ import annotations

import numpy as np

from ._kernels import csr_residual_aggregate
from .dataset import BipartiteGraph


def _inv_sqrt(degrees: np.ndarray) -> np.ndarray:
    out = np.zeros(len(degrees), dtype=np.float64)
    positive = degrees > 0
    out[positive] = 1.0 / np.sqrt(degrees[positive].astype(np.float64))
    return out


def edge_coefficients(graph: BipartiteGraph):
    """Per-edge weights 1/sqrt(deg(dst) * deg(src)) for both directions."""
    inv_u = _inv_sqrt(graph.user_deg)
    inv_i = _inv_sqrt(graph.item_deg)
    user_rows = np.repeat(np.arange(graph.user_count), np.diff(graph.user_indptr))
    item_rows = np.repeat(np.arange(graph.item_count), np.diff(graph.item_indptr))
    coef_user = inv_u[user_rows] * inv_i[graph.user_indices]
    coef_item = inv_i[item_rows] * inv_u[graph.item_indices]
    return coef_user, coef_item


def _as_f64(matrix, rows, name):
    out = np.ascontiguousarray(matrix, dtype=np.float64)
    if out.ndim != 2 or out.shape[0] != rows:
        raise ValueError(f"{name} must have shape ({rows}, dim), got {matrix.shape}")
    return out


def aggregate_layer(graph: BipartiteGraph, h_user: np.ndarray, h_item: np.ndarray):
    """One residual aggregation step; both outputs read layer-k inputs."""
    h_user = _as_f64(h_user, graph.user_count, "h_user")
    h_item = _as_f64(h_item, graph.item_count, "h_item")
    if h_user.shape[1] != h_item.shape[1]:
        raise ValueError(
            f"dimension mismatch: users {h_user.shape[1]} vs items {h_item.shape[1]}"
        )
    coef_user, coef_item = edge_coefficients(graph)
    next_user = np.empty_like(h_user)
    next_item = np.empty_like(h_item)
    csr_residual_aggregate(
        graph.user_indptr, graph.user_indices, coef_user, h_item, h_user, next_user
    )
    csr_residual_aggregate(
        graph.item_indptr, graph.item_indices, coef_item, h_user, h_item, next_item
    )
    return next_user, next_item


def propagate(graph: BipartiteGraph, h_user0, h_item0, k_layers: int):
    """Apply `k_layers` aggregation steps; k_layers=0 returns the inputs.

    The residual form already accumulates every lower layer, so the
    layer-K output is the final representation.
    """
    if k_layers < 0:
        raise ValueError(f"k_layers must be >= 0, got {k_layers}")
    h_user = _as_f64(h_user0, graph.user_count, "h_user0").copy()
    h_item = _as_f64(h_item0, graph.item_count, "h_item0").copy()
    for _ in range(k_layers):
        h_user, h_item = aggregate_layer(graph, h_user, h_item)
    return h_user, h_item


def propagate_backward(graph: BipartiteGraph, grad_user, grad_item, k_layers: int):
    """Adjoint of `propagate`.

    The stacked layer map is (I + A) with A the symmetric-normalized
    bipartite adjacency, so the adjoint equals the forward map.
    """
    return propagate(graph, grad_user, grad_item, k_layers)
