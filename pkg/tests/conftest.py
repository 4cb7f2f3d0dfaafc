import logging

import numpy as np
import pytest

from ccrec import dataset as ds

# off-grid hyperparameter warnings are expected noise in small test instances
logging.getLogger("ccrec.adapter").setLevel(logging.ERROR)
logging.getLogger("ccrec.trainer").setLevel(logging.ERROR)


def make_interactions(pairs, n_users=None, n_items=None):
    """InteractionSet from explicit index pairs (test construction helper)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    n_users = n_users if n_users is not None else int(pairs[:, 0].max()) + 1 if len(pairs) else 0
    n_items = n_items if n_items is not None else int(pairs[:, 1].max()) + 1 if len(pairs) else 0
    return ds._make_set(pairs, [f"u{k}" for k in range(n_users)], [f"i{k}" for k in range(n_items)])


def random_bipartite(rng, n_users, n_items, n_edges):
    """Random dedup'ed edge set covering the requested node ranges."""
    raw = rng.integers(0, [n_users, n_items], size=(n_edges, 2))
    pairs = np.unique(raw, axis=0)
    return make_interactions(pairs, n_users, n_items)


def dense_propagation_oracle(pairs, n_users, n_items, h_user, h_item, k):
    """(I + A)^k applied blockwise with the dense normalized adjacency."""
    adj = np.zeros((n_users, n_items))
    for u, i in pairs:
        adj[u, i] = 1.0
    deg_u = adj.sum(axis=1)
    deg_i = adj.sum(axis=0)
    n = n_users + n_items
    full = np.zeros((n, n))
    for u, i in np.argwhere(adj > 0):
        w = 1.0 / np.sqrt(deg_u[u] * deg_i[i])
        full[u, n_users + i] = w
        full[n_users + i, u] = w
    step = np.eye(n) + full
    stacked = np.vstack([h_user, h_item]).astype(np.float64)
    for _ in range(k):
        stacked = step @ stacked
    return stacked[:n_users], stacked[n_users:]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
