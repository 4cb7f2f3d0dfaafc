"""Full-ranking Recall@K / NDCG@K for warm and cold settings.

Candidates are every non-interacted item of the evaluated pool (warm
items, or the cold pool in the cold setting); ties break by ascending
item index. Users without ground truth in the evaluated split are
skipped. Per-user work is independent; CC_THREADS>1 parallelizes over
user chunks without changing any result.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kvdoc
from .dataset import BipartiteGraph, SplitBundle
from .errors import DataError
from .graph import propagate

DEFAULT_KS = (10, 50)
WITH_MLP = "with_mlp"
WITHOUT_MLP = "without_mlp"
MODES = (WITH_MLP, WITHOUT_MLP)


@dataclass
class EvalReport:
    setting: str  # warm | cold
    mode: str  # with_mlp | without_mlp
    split: str
    recall: dict
    ndcg: dict
    user_count: int

    def to_kv(self) -> dict:
        out = {
            "setting": self.setting,
            "mode": self.mode,
            "split": self.split,
            "users_evaluated": self.user_count,
        }
        for k in sorted(self.recall):
            out[f"recall@{k}"] = f"{self.recall[k]:.6f}"
        for k in sorted(self.ndcg):
            out[f"ndcg@{k}"] = f"{self.ndcg[k]:.6f}"
        return out

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "setting": self.setting,
                "mode": self.mode,
                "split": self.split,
                "users_evaluated": self.user_count,
                "recall": {str(k): self.recall[k] for k in sorted(self.recall)},
                "ndcg": {str(k): self.ndcg[k] for k in sorted(self.ndcg)},
            },
            sort_keys=True,
        )

    def write(self, kv_path, json_path=None) -> None:
        kvdoc.write(kv_path, self.to_kv())
        if json_path is not None:
            with open(json_path, "w", encoding="utf-8") as fh:
                fh.write(self.to_json_line() + "\n")


def recall_at_k(ranked_ids, truth, k: int) -> float:
    """|top-k hits| / |truth|."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    truth = set(int(t) for t in truth)
    if not truth:
        raise ValueError("empty ground truth")
    hits = sum(1 for i in ranked_ids[:k] if int(i) in truth)
    return hits / len(truth)


def ndcg_at_k(ranked_ids, truth, k: int) -> float:
    """Binary-gain NDCG with 1/log2(rank+1) discounts."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    truth = set(int(t) for t in truth)
    if not truth:
        raise ValueError("empty ground truth")
    dcg = 0.0
    for rank, i in enumerate(ranked_ids[:k], start=1):
        if int(i) in truth:
            dcg += 1.0 / np.log2(rank + 1)
    ideal = sum(1.0 / np.log2(r + 1) for r in range(1, min(len(truth), k) + 1))
    return dcg / ideal


def exact_topk(scores: np.ndarray, ids: np.ndarray, k: int) -> np.ndarray:
    """Top-k ids by (score desc, id asc); exact under ties.

    Partitions first, then keeps every candidate tied with the boundary
    score so the final sort sees all contenders.
    """
    n = scores.shape[0]
    if k >= n:
        cand = np.arange(n)
    else:
        part = np.argpartition(-scores, k - 1)[:k]
        boundary = scores[part].min()
        cand = np.flatnonzero(scores >= boundary)
    order = np.lexsort((ids[cand], -scores[cand]))
    return ids[cand[order][:k]]


def _threads() -> int:
    raw = os.environ.get("CC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _group_by_user(pairs: np.ndarray, user_count: int):
    order = np.argsort(pairs[:, 0], kind="stable")
    spairs = pairs[order]
    bounds = np.searchsorted(spairs[:, 0], np.arange(user_count + 1))
    return spairs[:, 1], bounds


def inference_tables(graph: BipartiteGraph, user0, item_contextual, adapter, k_layers, mode):
    """Propagated (user, item) tables for one inference mode.

    with_mlp propagates adapter-transformed contextual embeddings,
    without_mlp the raw ones. Zero-degree (cold) items pass through
    propagation unchanged, so their rows already hold the layer-0 value
    the cold scoring rule calls for.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    item0 = np.asarray(item_contextual, dtype=np.float64)
    if mode == WITH_MLP:
        if adapter is None:
            raise ValueError("with_mlp mode requires an adapter")
        item0 = adapter.forward(item0, train=False)
    return propagate(graph, user0, item0, k_layers)


def evaluate_ranking(
    user_vecs,
    splits: SplitBundle,
    split: str = "test",
    ks=DEFAULT_KS,
    setting: str = "warm",
    item_vecs=None,
    item_scores=None,
    mode_label: str = "",
    chunk: int = 256,
) -> EvalReport:
    """Rank candidates per user and average the metrics.

    Scores come from `user_vecs @ item_vecs.T`, or from the user-independent
    `item_scores` vector (popularity baseline). Candidates exclude each
    user's training items, plus validation items when scoring the test
    split.
    """
    if (item_vecs is None) == (item_scores is None):
        raise ValueError("pass exactly one of item_vecs / item_scores")
    if split not in ("train", "valid", "test", "cold_test"):
        raise ValueError(f"unknown split {split!r}")
    ks = sorted(int(k) for k in ks)
    if not ks or ks[0] < 1:
        raise ValueError(f"ks must be positive, got {ks}")

    target = getattr(splits, split)
    item_count = target.item_count
    user_count = target.user_count
    if setting == "cold":
        pool = np.asarray(splits.cold_items, dtype=np.int64)
    elif setting == "warm":
        pool = np.setdiff1d(np.arange(item_count, dtype=np.int64), splits.cold_items)
    else:
        raise ValueError(f"setting must be warm|cold, got {setting!r}")
    if len(pool) == 0:
        raise DataError(f"empty candidate pool for setting {setting!r}")

    pool_pos = np.full(item_count, -1, dtype=np.int64)
    pool_pos[pool] = np.arange(len(pool))

    truth_items, truth_bounds = _group_by_user(target.pairs, user_count)
    train_items, train_bounds = _group_by_user(splits.train.pairs, user_count)
    if split == "test":
        valid_items, valid_bounds = _group_by_user(splits.valid.pairs, user_count)
    else:
        valid_items = valid_bounds = None

    evaluated = np.flatnonzero(np.diff(truth_bounds) > 0)
    if len(evaluated) == 0:
        raise DataError(f"no users with ground truth in split {split!r}")

    max_k = max(ks)
    if item_vecs is not None:
        pool_vecs = np.asarray(item_vecs, dtype=np.float64)[pool]
    else:
        pool_scores = np.asarray(item_scores, dtype=np.float64)[pool]

    def eval_chunk(users):
        if item_vecs is not None:
            scores = np.asarray(user_vecs, dtype=np.float64)[users] @ pool_vecs.T
        else:
            scores = np.tile(pool_scores, (len(users), 1))
        sums = {k: np.zeros(2) for k in ks}  # recall, ndcg
        for row, u in enumerate(users):
            banned = train_items[train_bounds[u] : train_bounds[u + 1]]
            banned_pos = pool_pos[banned]
            scores[row, banned_pos[banned_pos >= 0]] = -np.inf
            if valid_bounds is not None:
                banned = valid_items[valid_bounds[u] : valid_bounds[u + 1]]
                banned_pos = pool_pos[banned]
                scores[row, banned_pos[banned_pos >= 0]] = -np.inf
            truth = truth_items[truth_bounds[u] : truth_bounds[u + 1]]
            ranked = exact_topk(scores[row], pool, max_k)
            for k in ks:
                sums[k] += (recall_at_k(ranked, truth, k), ndcg_at_k(ranked, truth, k))
        return sums

    chunks = [evaluated[s : s + chunk] for s in range(0, len(evaluated), chunk)]
    workers = _threads()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            results = list(pool_exec.map(eval_chunk, chunks))
    else:
        results = [eval_chunk(c) for c in chunks]

    totals = {k: np.zeros(2) for k in ks}
    for partial in results:
        for k in ks:
            totals[k] += partial[k]
    n = len(evaluated)
    return EvalReport(
        setting=setting,
        mode=mode_label,
        split=split,
        recall={k: float(totals[k][0] / n) for k in ks},
        ndcg={k: float(totals[k][1] / n) for k in ks},
        user_count=int(n),
    )


def evaluate_model(model, graph, splits, split="test", mode=WITH_MLP, ks=DEFAULT_KS) -> EvalReport:
    """Full-ranking report for a trained model (warm or cold split)."""
    user_vecs, item_vecs = inference_tables(
        graph,
        model.user_layer0.matrix,
        model.item_contextual.matrix,
        model.adapter,
        model.config.k_layers,
        mode,
    )
    setting = "cold" if split == "cold_test" else "warm"
    return evaluate_ranking(
        user_vecs, splits, split=split, ks=ks, setting=setting,
        item_vecs=item_vecs, mode_label=mode,
    )


def popularity_report(splits: SplitBundle, graph: BipartiteGraph, split="test", ks=DEFAULT_KS) -> EvalReport:
    """Ranking by training-set item degree; the trivial non-personalized baseline."""
    setting = "cold" if split == "cold_test" else "warm"
    return evaluate_ranking(
        user_vecs=None,
        splits=splits,
        split=split,
        ks=ks,
        setting=setting,
        item_scores=graph.item_deg.astype(np.float64),
        mode_label="popularity",
    )


def score(model, graph, user: int, item: int, mode=WITH_MLP, tables=None) -> float:
    """Dot-product score of one pair under the chosen inference mode.

    Cold items (zero training degree) are scored against their layer-0
    vector: raw contextual in without_mlp mode, adapter-transformed in
    with_mlp mode. This falls out of pass-through propagation.
    """
    if tables is None:
        tables = inference_tables(
            graph,
            model.user_layer0.matrix,
            model.item_contextual.matrix,
            model.adapter,
            model.config.k_layers,
            mode,
        )
    user_vecs, item_vecs = tables
    if not (0 <= user < user_vecs.shape[0]):
        raise IndexError(f"user index {user} out of range")
    if not (0 <= item < item_vecs.shape[0]):
        raise IndexError(f"item index {item} out of range")
    return float(user_vecs[user] @ item_vecs[item])


def export_projections(model, path) -> int:
    """Dump contextual, adapter-mapped and learned-user rows as TSV.

    Row count is item_count * 2 + user_count; suitable input for any
    external 2-D projection tool.
    """
    contextual = model.item_contextual.matrix
    mapped = model.adapter.forward(np.asarray(contextual, dtype=np.float64), train=False)
    users = model.cached_user_final.matrix
    dim = contextual.shape[1]
    header = "kind\tindex\t" + "\t".join(f"v{j}" for j in range(dim))
    rows = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for kind, matrix in (
            ("item_contextual", contextual),
            ("item_mapped", mapped),
            ("user_learned", users),
        ):
            for idx in range(matrix.shape[0]):
                values = "\t".join(repr(float(v)) for v in matrix[idx])
                fh.write(f"{kind}\t{idx}\t{values}\n")
                rows += 1
    return rows
