"""Interaction ingestion, preprocessing protocol and split/graph construction.

Pipeline order used by the CLI: load -> k-core filter -> cold item split
-> per-user holdout split -> training graph. All sampling is driven by an
explicit seed and is bit-reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kvdoc
from .errors import DataError, FormatError
from .tables import EmbeddingTable

EMBEDDING_MAGIC = b"CCEMB1"


@dataclass
class InteractionSet:
    """Deduplicated implicit-feedback pairs with contiguous index maps.

    `pairs` is an (n, 2) int64 array of (user_index, item_index).
    `user_ids`/`item_ids` map index -> raw ID; the dict maps invert them.
    Several sets may share one id space (e.g. the splits of a bundle).
    """

    pairs: np.ndarray
    user_ids: list
    item_ids: list
    user_index: dict = field(repr=False)
    item_index: dict = field(repr=False)

    @property
    def user_count(self) -> int:
        return len(self.user_ids)

    @property
    def item_count(self) -> int:
        return len(self.item_ids)

    def __len__(self) -> int:
        return len(self.pairs)

    def with_pairs(self, pairs: np.ndarray) -> "InteractionSet":
        """New set over the same id space."""
        return replace(self, pairs=np.ascontiguousarray(pairs, dtype=np.int64))


def _index_maps(ids):
    return {raw: idx for idx, raw in enumerate(ids)}


def _make_set(pairs, user_ids, item_ids):
    return InteractionSet(
        pairs=np.ascontiguousarray(pairs, dtype=np.int64).reshape(-1, 2),
        user_ids=list(user_ids),
        item_ids=list(item_ids),
        user_index=_index_maps(user_ids),
        item_index=_index_maps(item_ids),
    )


@dataclass
class BipartiteGraph:
    """CSR adjacency in both directions plus per-node degrees.

    `user_indices[user_indptr[u]:user_indptr[u+1]]` are u's items, sorted;
    the item direction mirrors it. Both directions always describe the
    same edge set.
    """

    user_indptr: np.ndarray
    user_indices: np.ndarray
    item_indptr: np.ndarray
    item_indices: np.ndarray
    user_deg: np.ndarray
    item_deg: np.ndarray

    @property
    def user_count(self) -> int:
        return len(self.user_indptr) - 1

    @property
    def item_count(self) -> int:
        return len(self.item_indptr) - 1

    @property
    def edge_count(self) -> int:
        return len(self.user_indices)

    def neighbors_of_user(self, u: int) -> np.ndarray:
        return self.user_indices[self.user_indptr[u] : self.user_indptr[u + 1]]

    def neighbors_of_item(self, i: int) -> np.ndarray:
        return self.item_indices[self.item_indptr[i] : self.item_indptr[i + 1]]


@dataclass
class SplitBundle:
    """Warm train/valid/test partition plus the held-out cold items."""

    train: InteractionSet
    valid: InteractionSet
    test: InteractionSet
    cold_items: np.ndarray
    cold_test: InteractionSet


def load_interactions(path) -> InteractionSet:
    """Parse a user<TAB>item interaction log into a deduplicated set.

    Indices are assigned in first-seen order; extra columns are ignored.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"interactions file not found: {path}")

    user_ids, item_ids = [], []
    user_index, item_index = {}, {}
    seen = set()
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 2 or not fields[0] or not fields[1]:
                raise DataError(
                    f"{path}:{lineno}: malformed line, expected 'user<TAB>item', got {line!r}"
                )
            u_raw, i_raw = fields[0], fields[1]
            u = user_index.get(u_raw)
            if u is None:
                u = len(user_ids)
                user_index[u_raw] = u
                user_ids.append(u_raw)
            i = item_index.get(i_raw)
            if i is None:
                i = len(item_ids)
                item_index[i_raw] = i
                item_ids.append(i_raw)
            if (u, i) in seen:
                continue
            seen.add((u, i))
            pairs.append((u, i))
    if not pairs:
        raise DataError(f"{path}: empty input")
    return InteractionSet(
        pairs=np.asarray(pairs, dtype=np.int64),
        user_ids=user_ids,
        item_ids=item_ids,
        user_index=user_index,
        item_index=item_index,
    )


def k_core_filter(inters: InteractionSet, k: int) -> InteractionSet:
    """Iteratively drop users/items with degree < k until a fixpoint.

    Surviving nodes are remapped to contiguous indices in first-seen
    order of the surviving pairs.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pairs = inters.pairs
    keep = np.ones(len(pairs), dtype=bool)
    while True:
        u_deg = np.bincount(pairs[keep, 0], minlength=inters.user_count)
        i_deg = np.bincount(pairs[keep, 1], minlength=inters.item_count)
        weak = keep & ((u_deg[pairs[:, 0]] < k) | (i_deg[pairs[:, 1]] < k))
        if not weak.any():
            break
        keep &= ~weak
    if not keep.any():
        raise DataError("k-core eliminated all data")

    survivors = pairs[keep]
    new_u, rows_u = np.unique(survivors[:, 0], return_index=True)
    new_i, rows_i = np.unique(survivors[:, 1], return_index=True)
    # first-seen order over the surviving pair list
    old_users = new_u[np.argsort(rows_u, kind="stable")]
    old_items = new_i[np.argsort(rows_i, kind="stable")]
    u_remap = np.full(inters.user_count, -1, dtype=np.int64)
    i_remap = np.full(inters.item_count, -1, dtype=np.int64)
    u_remap[old_users] = np.arange(len(old_users))
    i_remap[old_items] = np.arange(len(old_items))

    remapped = np.column_stack((u_remap[survivors[:, 0]], i_remap[survivors[:, 1]]))
    return _make_set(
        remapped,
        [inters.user_ids[old] for old in old_users],
        [inters.item_ids[old] for old in old_items],
    )


def cold_item_split(inters: InteractionSet, fraction: float, seed: int):
    """Sample floor(fraction * item_count) cold items and excise their pairs.

    Returns (warm, cold_items, cold_test); all three keep the input's id
    space, so cold items simply have zero degree on the warm side.
    """
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"cold fraction must be in (0,1), got {fraction}")
    n_cold = int(fraction * inters.item_count)
    if n_cold < 1:
        raise ValueError(
            f"fraction {fraction} of {inters.item_count} items selects no cold items"
        )
    rng = np.random.default_rng(seed)
    cold_items = np.sort(rng.choice(inters.item_count, size=n_cold, replace=False))
    is_cold = np.isin(inters.pairs[:, 1], cold_items)
    warm = inters.with_pairs(inters.pairs[~is_cold])
    cold_test = inters.with_pairs(inters.pairs[is_cold])
    return warm, cold_items.astype(np.int64), cold_test


def holdout_split(
    warm: InteractionSet,
    ratios=(0.8, 0.1, 0.1),
    seed: int = 0,
    cold_items: np.ndarray | None = None,
    cold_test: InteractionSet | None = None,
) -> SplitBundle:
    """Per-user random train/valid/test assignment.

    valid and test take floor(ratio * n) interactions each; train keeps
    the remainder, and always keeps at least one interaction per user.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be 3 non-negative values, got {ratios}")

    rng = np.random.default_rng(seed)
    pairs = warm.pairs
    order = np.argsort(pairs[:, 0], kind="stable")
    sorted_pairs = pairs[order]
    boundaries = np.searchsorted(sorted_pairs[:, 0], np.arange(warm.user_count + 1))

    train_rows, valid_rows, test_rows = [], [], []
    for u in range(warm.user_count):
        lo, hi = boundaries[u], boundaries[u + 1]
        n = hi - lo
        if n == 0:
            continue
        items = sorted_pairs[lo:hi, 1]
        items = items[rng.permutation(n)]
        n_valid = int(ratios[1] * n)
        n_test = int(ratios[2] * n)
        n_train = n - n_valid - n_test
        if n_train == 0:
            if n_valid > 0:
                n_valid -= 1
            else:
                n_test -= 1
            n_train = 1
        for rows, chunk in (
            (train_rows, items[:n_train]),
            (valid_rows, items[n_train : n_train + n_valid]),
            (test_rows, items[n_train + n_valid :]),
        ):
            if len(chunk):
                rows.append(np.column_stack((np.full(len(chunk), u, dtype=np.int64), chunk)))

    def stack(rows):
        if not rows:
            return np.empty((0, 2), dtype=np.int64)
        return np.concatenate(rows, axis=0)

    if cold_items is None:
        cold_items = np.empty(0, dtype=np.int64)
    if cold_test is None:
        cold_test = warm.with_pairs(np.empty((0, 2), dtype=np.int64))
    return SplitBundle(
        train=warm.with_pairs(stack(train_rows)),
        valid=warm.with_pairs(stack(valid_rows)),
        test=warm.with_pairs(stack(test_rows)),
        cold_items=np.asarray(cold_items, dtype=np.int64),
        cold_test=cold_test,
    )


def build_graph(train: InteractionSet) -> BipartiteGraph:
    """CSR adjacency in both directions with sorted neighbor lists."""
    pairs = train.pairs
    u, i = pairs[:, 0], pairs[:, 1]
    user_deg = np.bincount(u, minlength=train.user_count).astype(np.int64)
    item_deg = np.bincount(i, minlength=train.item_count).astype(np.int64)

    by_user = np.lexsort((i, u))
    by_item = np.lexsort((u, i))
    return BipartiteGraph(
        user_indptr=np.concatenate(([0], np.cumsum(user_deg))).astype(np.int64),
        user_indices=np.ascontiguousarray(i[by_user], dtype=np.int64),
        item_indptr=np.concatenate(([0], np.cumsum(item_deg))).astype(np.int64),
        item_indices=np.ascontiguousarray(u[by_item], dtype=np.int64),
        user_deg=user_deg,
        item_deg=item_deg,
    )


def graph_pairs(graph: BipartiteGraph) -> np.ndarray:
    """Reconstruct the (user, item) edge list from the user-side CSR."""
    users = np.repeat(np.arange(graph.user_count, dtype=np.int64), graph.user_deg)
    return np.column_stack((users, graph.user_indices))


# ---------------------------------------------------------------------------
# Embedding file format (CCEMB1)
#
# magic "CCEMB1" | u32 count | u32 dim | count * record
# record: u32 id_len | id bytes (UTF-8) | dim * f32, all little-endian.
# ---------------------------------------------------------------------------


def write_embedding_file(path, ids, matrix) -> None:
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValueError(f"matrix shape {matrix.shape} does not match {len(ids)} ids")
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        for raw_id, row in zip(ids, matrix):
            encoded = str(raw_id).encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(row.tobytes())


def read_embedding_header(path) -> tuple:
    """(count, dim) from a CCEMB1 header."""
    with open(path, "rb") as fh:
        head = fh.read(len(EMBEDDING_MAGIC) + 8)
    if len(head) < len(EMBEDDING_MAGIC) + 8:
        raise FormatError(f"{path}: truncated header")
    if head[: len(EMBEDDING_MAGIC)] != EMBEDDING_MAGIC:
        raise FormatError(f'{path}: bad magic, expected "CCEMB1"')
    count, dim = struct.unpack("<II", head[len(EMBEDDING_MAGIC) :])
    return count, dim


def read_embedding_file(path):
    """(ids, float32 matrix) in file order."""
    count, dim = read_embedding_header(path)
    ids = []
    matrix = np.empty((count, dim), dtype=np.float32)
    with open(path, "rb") as fh:
        fh.seek(len(EMBEDDING_MAGIC) + 8)
        payload = fh.read()
    offset = 0
    row_bytes = dim * 4
    for r in range(count):
        if offset + 4 > len(payload):
            raise FormatError(f"{path}: truncated record {r}")
        (id_len,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        if offset + id_len + row_bytes > len(payload):
            raise FormatError(f"{path}: truncated record {r}")
        ids.append(payload[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        matrix[r] = np.frombuffer(payload, dtype="<f4", count=dim, offset=offset)
        offset += row_bytes
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} trailing bytes")
    return ids, matrix


def load_embeddings(path, item_ids, expected_dim: int | None = None) -> EmbeddingTable:
    """Rows of the CCEMB1 file reordered to item-index order, marked frozen.

    Every raw ID in `item_ids` must be present; extra rows are ignored.
    """
    file_ids, matrix = read_embedding_file(path)
    if expected_dim is not None and matrix.shape[1] != expected_dim:
        raise DataError(
            f"{path}: embedding dim {matrix.shape[1]} does not match expected {expected_dim}"
        )
    position = {}
    for pos, raw in enumerate(file_ids):
        if raw in position:
            raise DataError(f"{path}: duplicate item id {raw!r}")
        position[raw] = pos
    missing = [raw for raw in item_ids if raw not in position]
    if missing:
        shown = ", ".join(repr(m) for m in missing[:10])
        raise DataError(
            f"{path}: missing embeddings for {len(missing)} item(s), first: {shown}"
        )
    rows = np.asarray([position[raw] for raw in item_ids], dtype=np.int64)
    table = EmbeddingTable(matrix=matrix[rows], trainable=False, node_kind="item")
    table.assert_finite()
    return table


# ---------------------------------------------------------------------------
# Split persistence
# ---------------------------------------------------------------------------

_SPLIT_FILES = {"train": "train.tsv", "valid": "valid.tsv", "test": "test.tsv", "cold_test": "cold_test.tsv"}


def _write_pairs(path, pairs):
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in pairs:
            fh.write(f"{u}\t{i}\n")


def _read_pairs(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                u, i = line.split("\t")
                rows.append((int(u), int(i)))
    return np.asarray(rows, dtype=np.int64).reshape(-1, 2)


def _write_ids(path, ids):
    with open(path, "w", encoding="utf-8") as fh:
        for idx, raw in enumerate(ids):
            fh.write(f"{idx}\t{raw}\n")


def _read_ids(path):
    ids = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            idx, raw = line.split("\t", 1)
            assert int(idx) == len(ids), f"{path}: non-contiguous index {idx}"
            ids.append(raw)
    return ids


def save_splits(out_dir, bundle: SplitBundle, meta: dict | None = None) -> None:
    """Write id maps, split pair files, cold item list and the split manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_ids(out_dir / "users.tsv", bundle.train.user_ids)
    _write_ids(out_dir / "items.tsv", bundle.train.item_ids)
    for attr, name in _SPLIT_FILES.items():
        _write_pairs(out_dir / name, getattr(bundle, attr).pairs)
    with open(out_dir / "cold_items.txt", "w", encoding="utf-8") as fh:
        for i in bundle.cold_items:
            fh.write(f"{i}\n")
    manifest = {
        "users": bundle.train.user_count,
        "items": bundle.train.item_count,
        "train_pairs": len(bundle.train),
        "valid_pairs": len(bundle.valid),
        "test_pairs": len(bundle.test),
        "cold_items": len(bundle.cold_items),
        "cold_test_pairs": len(bundle.cold_test),
    }
    if meta:
        manifest.update(meta)
    kvdoc.write(out_dir / "splits.manifest", manifest)


def load_splits(data_dir) -> SplitBundle:
    data_dir = Path(data_dir)
    if not (data_dir / "splits.manifest").exists():
        raise DataError(f"{data_dir}: not a split directory (missing splits.manifest)")
    user_ids = _read_ids(data_dir / "users.tsv")
    item_ids = _read_ids(data_dir / "items.tsv")
    base = _make_set(np.empty((0, 2), dtype=np.int64), user_ids, item_ids)
    parts = {
        attr: base.with_pairs(_read_pairs(data_dir / name))
        for attr, name in _SPLIT_FILES.items()
    }
    with open(data_dir / "cold_items.txt", "r", encoding="utf-8") as fh:
        cold = [int(line) for line in fh.read().split()]
    return SplitBundle(
        train=parts["train"],
        valid=parts["valid"],
        test=parts["test"],
        cold_items=np.asarray(cold, dtype=np.int64),
        cold_test=parts["cold_test"],
    )
