"""Benchmark the compiled aggregation kernel against the scipy fallback.

Times K-layer propagation over random bipartite graphs at a few sizes.
Run: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from ccrec._kernels import available_backends, get_backend
from ccrec.dataset import build_graph
from ccrec.graph import edge_coefficients


def make_graph(rng, n_users, n_items, n_edges):
    pairs = np.unique(rng.integers(0, [n_users, n_items], size=(n_edges, 2)), axis=0)

    class FakeInters:
        def __init__(self):
            self.pairs = pairs
            self.user_count = n_users
            self.item_count = n_items

    return build_graph(FakeInters())


def propagate_with(backend, graph, h_user, h_item, k):
    agg = get_backend(backend).csr_residual_aggregate
    coef_user, coef_item = edge_coefficients(graph)
    u, i = h_user.copy(), h_item.copy()
    for _ in range(k):
        next_u = np.empty_like(u)
        next_i = np.empty_like(i)
        agg(graph.user_indptr, graph.user_indices, coef_user, i, u, next_u)
        agg(graph.item_indptr, graph.item_indices, coef_item, u, i, next_i)
        u, i = next_u, next_i
    return u, i


def bench(backend, graph, dim, k, repeats):
    rng = np.random.default_rng(0)
    h_user = rng.normal(size=(graph.user_count, dim))
    h_item = rng.normal(size=(graph.item_count, dim))
    propagate_with(backend, graph, h_user, h_item, k)  # warm-up
    best = np.inf
    for _ in range(repeats):
        started = time.perf_counter()
        propagate_with(backend, graph, h_user, h_item, k)
        best = min(best, time.perf_counter() - started)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="small sizes only")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    sizes = [(2_000, 1_000, 20_000, 64, 2)]
    if not args.quick:
        sizes += [
            (20_000, 8_000, 300_000, 64, 2),
            (50_000, 20_000, 600_000, 128, 2),
            (80_000, 32_000, 620_000, 768, 2),
        ]

    backends = available_backends()
    rng = np.random.default_rng(42)
    print(f"backends: {', '.join(backends)}")
    print(f"{'users':>7} {'items':>7} {'edges':>8} {'dim':>4} {'K':>2} "
          + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for n_users, n_items, n_edges, dim, k in sizes:
        graph = make_graph(rng, n_users, n_items, n_edges)
        times = [bench(b, graph, dim, k, args.repeats) for b in backends]
        ratio = times[0] / times[-1] if len(times) > 1 and times[-1] > 0 else float("nan")
        print(
            f"{n_users:>7} {n_items:>7} {graph.edge_count:>8} {dim:>4} {k:>2} "
            + " ".join(f"{t * 1e3:>8.2f}ms" for t in times)
            + (f"   {ratio:.2f}x" if len(times) > 1 else "")
        )


if __name__ == "__main__":
    main()
