"""Alignment and uniformity objectives for the two tutoring phases.

Both phases minimize mean squared distance between interacting pairs
plus a log-Gaussian-kernel uniformity penalty over the trainable side's
batch rows. The frozen side is a stop-gradient: its rows are captured as
constants before differentiation, so analytic gradients match finite
differences of the loss with those constants held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapter import MlpAdapter
from .dataset import BipartiteGraph
from .graph import propagate, propagate_backward

ITEM_TUTORING = "item_tutoring"
USER_TUTORING = "user_tutoring"
UNIFORMITY_MODES = ("squared", "literal")

# distances below this are treated as coincident rows in literal mode
_LITERAL_EPS = 1e-15


@dataclass
class LossConfig:
    normalize_before_loss: bool = True
    uniformity_exponent: str = "squared"
    batch_size: int = 1024

    def validate(self):
        problems = []
        if self.uniformity_exponent not in UNIFORMITY_MODES:
            problems.append(
                f"uniformity_exponent must be one of {UNIFORMITY_MODES}, "
                f"got {self.uniformity_exponent!r}"
            )
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        return problems


@dataclass
class PhaseState:
    """Everything a phase-loss evaluation reads.

    `user0` is the (U, d) float64 layer-0 user table, `item0` the (I, d)
    contextual item table; which one is trainable depends on the phase.
    """

    graph: BipartiteGraph
    user0: np.ndarray
    item0: np.ndarray
    adapter: MlpAdapter | None
    k_layers: int
    loss: LossConfig = field(default_factory=LossConfig)


def l2_normalize_rows(rows: np.ndarray) -> np.ndarray:
    """Unit-norm copies; zero rows stay zero."""
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return rows / np.where(norms > 0.0, norms, 1.0)


def _normalize_cache(rows):
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return rows / safe, safe, norms[:, 0] == 0.0


def _normalize_backward(y, safe, zero_rows, grad_y):
    grad = (grad_y - (grad_y * y).sum(axis=1, keepdims=True) * y) / safe
    if zero_rows.any():
        grad[zero_rows] = 0.0
    return grad


def alignment_loss(side_indices, frozen_indices, h_side, h_frozen, normalize=True) -> float:
    """Mean squared distance between paired rows of the two tables."""
    side_indices = np.asarray(side_indices)
    frozen_indices = np.asarray(frozen_indices)
    if len(side_indices) == 0:
        raise ValueError("empty batch")
    if len(side_indices) != len(frozen_indices):
        raise ValueError("side/frozen index arrays differ in length")
    a = np.asarray(h_side, dtype=np.float64)[side_indices]
    b = np.asarray(h_frozen, dtype=np.float64)[frozen_indices]
    if normalize:
        a = l2_normalize_rows(a)
        b = l2_normalize_rows(b)
    return float(((a - b) ** 2).sum(axis=1).mean())


def uniformity_loss(rows, exponent="squared", normalize=True) -> float:
    """log of the mean Gaussian kernel over all ordered row pairs.

    Always <= 0; equals 0 iff all rows coincide.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise ValueError(f"expected a non-empty (n, d) batch, got shape {rows.shape}")
    if normalize:
        rows = l2_normalize_rows(rows)
    value, _ = _uniformity_value_grad(rows, exponent, want_grad=False)
    return value


def _pairwise_sq(y):
    sq = (y * y).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (y @ y.T)
    np.maximum(d2, 0.0, out=d2)
    # self-distances are zero by definition; the dot-product form leaves
    # cancellation noise there that sqrt() would amplify
    np.fill_diagonal(d2, 0.0)
    return d2


def _uniformity_value_grad(y, exponent, want_grad=True):
    if exponent not in UNIFORMITY_MODES:
        raise ValueError(f"unknown uniformity exponent {exponent!r}")
    n = y.shape[0]
    d2 = _pairwise_sq(y)
    if exponent == "squared":
        kernel = np.exp(-2.0 * d2)
        total = kernel.sum()
        value = float(np.log(total / (n * n)))
        if not want_grad:
            return value, None
        row_sum = kernel.sum(axis=1)
        grad = (-8.0 / total) * (row_sum[:, None] * y - kernel @ y)
        return value, grad
    dist = np.sqrt(d2)
    kernel = np.exp(-2.0 * dist)
    total = kernel.sum()
    value = float(np.log(total / (n * n)))
    if not want_grad:
        return value, None
    ratio = np.where(dist > _LITERAL_EPS, kernel / np.where(dist > 0.0, dist, 1.0), 0.0)
    row_sum = ratio.sum(axis=1)
    grad = (-4.0 / total) * (row_sum[:, None] * y - ratio @ y)
    return value, grad


def _batch_arrays(batch, graph):
    users = np.asarray(batch[0], dtype=np.int64)
    items = np.asarray(batch[1], dtype=np.int64)
    if users.shape != items.shape or users.ndim != 1:
        raise ValueError("batch must be a pair of equal-length 1-D index arrays")
    if len(users) == 0:
        raise ValueError("empty batch")
    if users.min() < 0 or users.max() >= graph.user_count:
        raise IndexError("user index out of range")
    if items.min() < 0 or items.max() >= graph.item_count:
        raise IndexError("item index out of range")
    return users, items


def _phase_tables(phase, state, train_adapter):
    """Propagated (user, item) tables for one phase evaluation."""
    item0 = np.asarray(state.item0, dtype=np.float64)
    if phase == ITEM_TUTORING:
        return propagate(state.graph, state.user0, item0, state.k_layers)
    if phase == USER_TUTORING:
        if state.adapter is None:
            raise ValueError("user tutoring requires an adapter")
        transformed = state.adapter.forward(item0, train=train_adapter)
        return propagate(state.graph, state.user0, transformed, state.k_layers)
    raise ValueError(f"unknown phase {phase!r}")


def phase_frozen_rows(phase, batch, state) -> np.ndarray:
    """The stop-gradient side's propagated rows for this batch.

    Item tutoring freezes the item rows; user tutoring freezes the user
    rows. Computed with the adapter in inference mode.
    """
    users, items = _batch_arrays(batch, state.graph)
    h_user, h_item = _phase_tables(phase, state, train_adapter=False)
    return h_item[items].copy() if phase == ITEM_TUTORING else h_user[users].copy()


def _loss_terms(side_rows_sel, frozen_rows, distinct_pos, config):
    """(alignment, uniformity) given selected trainable rows.

    `side_rows_sel` holds the distinct trainable rows, `distinct_pos`
    maps each edge to its row.
    """
    if config.normalize_before_loss:
        y, safe, zero_rows = _normalize_cache(side_rows_sel)
        frozen = l2_normalize_rows(frozen_rows)
    else:
        y, safe, zero_rows = side_rows_sel, None, None
        frozen = frozen_rows
    anchors = y[distinct_pos]
    align = float(((anchors - frozen) ** 2).sum(axis=1).mean())
    uniform, grad_unif = _uniformity_value_grad(y, config.uniformity_exponent)
    return align, uniform, y, safe, zero_rows, anchors, frozen, grad_unif


def phase_loss_value(phase, batch, state, frozen_rows) -> float:
    """Loss with the frozen side pinned to `frozen_rows`.

    Pure in the trainable parameters (adapter runs in inference mode),
    which makes it directly finite-differentiable.
    """
    users, items = _batch_arrays(batch, state.graph)
    h_user, h_item = _phase_tables(phase, state, train_adapter=False)
    side_idx = users if phase == ITEM_TUTORING else items
    trainable = h_user if phase == ITEM_TUTORING else h_item
    distinct, pos = np.unique(side_idx, return_inverse=True)
    align, uniform, *_ = _loss_terms(trainable[distinct], frozen_rows, pos, state.loss)
    return align + uniform


def phase_loss(phase, batch, state):
    """(loss, gradients) for one edge batch.

    Gradients cover only the phase's trainable side: the layer-0 user
    table in item tutoring ({"user0": array}), the adapter parameters in
    user tutoring ({"adapter": [(grad_w, grad_b), ...]}). Uniformity is
    taken over the distinct trainable-side rows of the batch.
    """
    users, items = _batch_arrays(batch, state.graph)
    train_adapter = phase == USER_TUTORING
    h_user, h_item = _phase_tables(phase, state, train_adapter=train_adapter)

    if phase == ITEM_TUTORING:
        side_idx, trainable, frozen_rows = users, h_user, h_item[items]
    else:
        side_idx, trainable, frozen_rows = items, h_item, h_user[users]

    distinct, pos = np.unique(side_idx, return_inverse=True)
    align, uniform, y, safe, zero_rows, anchors, frozen, grad_unif = _loss_terms(
        trainable[distinct], frozen_rows, pos, state.loss
    )

    grad_y = grad_unif
    align_grad = (2.0 / len(pos)) * (anchors - frozen)
    np.add.at(grad_y, pos, align_grad)
    if state.loss.normalize_before_loss:
        grad_rows = _normalize_backward(y, safe, zero_rows, grad_y)
    else:
        grad_rows = grad_y

    grad_table = np.zeros_like(trainable)
    grad_table[distinct] = grad_rows

    if phase == ITEM_TUTORING:
        grad_user0, _ = propagate_backward(
            state.graph, grad_table, np.zeros_like(h_item), state.k_layers
        )
        grads = {"user0": grad_user0}
    else:
        _, grad_item0 = propagate_backward(
            state.graph, np.zeros_like(h_user), grad_table, state.k_layers
        )
        param_grads, _ = state.adapter.backward(grad_item0)
        grads = {"adapter": param_grads}
    return align + uniform, grads
