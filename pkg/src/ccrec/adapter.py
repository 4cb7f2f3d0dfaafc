"""MLP that maps frozen item contextual embeddings into the joint space.

Input and output width both equal the embedding dimension; hidden layers
use a rectifier followed by inverted dropout in train mode. The final
layer is affine only, so transformed embeddings can keep negative
coordinates.
"""

from __future__ import annotations

import logging

import numpy as np

LAYER_GRID = (1, 2, 3)
HIDDEN_GRID = (384, 768, 1536)
DROPOUT_GRID = (0.2, 0.5)

logger = logging.getLogger(__name__)


class MlpAdapter:
    def __init__(self, weights, biases, dropout_rate: float, seed: int):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.dropout_rate = float(dropout_rate)
        self.seed = int(seed)
        _, dropout_seed = np.random.SeedSequence(seed).spawn(2)
        self._dropout_rng = np.random.default_rng(dropout_seed)
        self._cache = None

    @property
    def layer_count(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.weights[0].shape[0]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Affine-rectifier stack; caches intermediates when train=True."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected (n, {self.dim}) input, got {x.shape}")
        cache = {"x": x, "inputs": [], "relu_masks": [], "dropout_masks": []}
        z = x
        last = self.layer_count - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            cache["inputs"].append(z)
            z = z @ w + b
            if l == last:
                break
            mask = z > 0.0
            z = np.where(mask, z, 0.0)
            cache["relu_masks"].append(mask)
            if train and self.dropout_rate > 0.0:
                keep = 1.0 - self.dropout_rate
                drop = self._dropout_rng.random(z.shape) < self.dropout_rate
                z = np.where(drop, 0.0, z / keep)
                cache["dropout_masks"].append(drop)
            else:
                cache["dropout_masks"].append(None)
        self._cache = cache if train else None
        return z

    def backward(self, grad_out: np.ndarray):
        """Reverse-mode gradients for the batch of the last train forward.

        Returns ([(grad_w, grad_b) per layer], grad_x), consistent with
        the cached rectifier and dropout masks.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a cached train-mode forward")
        cache = self._cache
        grad = np.asarray(grad_out, dtype=np.float64)
        if grad.shape != (cache["x"].shape[0], self.dim):
            raise ValueError(
                f"grad_out shape {grad.shape} does not match forward batch "
                f"{(cache['x'].shape[0], self.dim)}"
            )
        param_grads = [None] * self.layer_count
        keep = 1.0 - self.dropout_rate
        for l in range(self.layer_count - 1, -1, -1):
            if l < self.layer_count - 1:
                drop = cache["dropout_masks"][l]
                if drop is not None:
                    grad = np.where(drop, 0.0, grad / keep)
                grad = np.where(cache["relu_masks"][l], grad, 0.0)
            z_in = cache["inputs"][l]
            param_grads[l] = (z_in.T @ grad, grad.sum(axis=0))
            grad = grad @ self.weights[l].T
        return param_grads, grad

    def parameters(self):
        """Flat list alternating weight, bias per layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy_parameters(self):
        return [p.copy() for p in self.parameters()]

    def set_parameters(self, params):
        flat = list(params)
        if len(flat) != 2 * self.layer_count:
            raise ValueError("parameter list length mismatch")
        for l in range(self.layer_count):
            self.weights[l] = np.asarray(flat[2 * l], dtype=np.float64)
            self.biases[l] = np.asarray(flat[2 * l + 1], dtype=np.float64)

    def rng_state(self) -> dict:
        return self._dropout_rng.bit_generator.state

    def set_rng_state(self, state: dict) -> None:
        self._dropout_rng.bit_generator.state = state


def layer_shapes(dim: int, layer_count: int, hidden_dim: int):
    """Affine shapes d -> h -> ... -> h -> d (single layer: d -> d)."""
    if layer_count == 1:
        return [(dim, dim)]
    shapes = [(dim, hidden_dim)]
    shapes += [(hidden_dim, hidden_dim)] * (layer_count - 2)
    shapes.append((hidden_dim, dim))
    return shapes


def init_adapter(
    dim: int,
    layer_count: int = 2,
    hidden_dim: int = 768,
    dropout_rate: float = 0.2,
    seed: int = 0,
) -> MlpAdapter:
    """Fan-scaled uniform weights, zero biases, deterministic per seed.

    Off-grid hyperparameters are accepted with a warning; only
    non-positive sizes and dropout outside [0,1) are rejected.
    """
    if layer_count < 1:
        raise ValueError(f"layer_count must be >= 1, got {layer_count}")
    if hidden_dim < 1:
        raise ValueError(f"hidden_dim must be >= 1, got {hidden_dim}")
    if not (0.0 <= dropout_rate < 1.0):
        raise ValueError(f"dropout_rate must be in [0,1), got {dropout_rate}")
    if layer_count not in LAYER_GRID:
        logger.warning("adapter layer_count %d outside documented grid %s", layer_count, LAYER_GRID)
    if layer_count > 1 and hidden_dim not in HIDDEN_GRID:
        logger.warning("adapter hidden_dim %d outside documented grid %s", hidden_dim, HIDDEN_GRID)
    if dropout_rate not in DROPOUT_GRID and dropout_rate != 0.0:
        logger.warning("adapter dropout %.3f outside documented grid %s", dropout_rate, DROPOUT_GRID)

    init_seed, _ = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(init_seed)
    weights, biases = [], []
    for d_in, d_out in layer_shapes(dim, layer_count, hidden_dim):
        bound = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MlpAdapter(weights, biases, dropout_rate, seed)
