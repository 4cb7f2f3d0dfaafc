"""Two-phase training schedule: item tutoring, then user tutoring.

Item tutoring trains the randomly initialized user table against frozen
propagated item embeddings; user tutoring trains the adapter under
frozen users. Each phase runs Adam over shuffled edge batches with
NDCG@10 early stopping on the validation split and keeps its best-epoch
snapshot; extra rounds alternate the two phases without re-initializing
anything. The returned model is the snapshot of the phase with the best
validation metric.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .adapter import MlpAdapter, init_adapter
from .dataset import BipartiteGraph, SplitBundle, build_graph
from .errors import ConfigError, DataError, FormatError
from .evaluate import WITH_MLP, WITHOUT_MLP, evaluate_ranking, inference_tables
from .formats import read_container, write_container
from .graph import propagate
from .objective import ITEM_TUTORING, USER_TUTORING, LossConfig, PhaseState, phase_loss
from .tables import EmbeddingTable

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
USER_INIT_SCALE = 0.1

LR_GRID = (1e-4, 1e-3, 1e-2)
WD_GRID = (1e-4, 1e-5, 1e-6)
K_GRID = (1, 2, 3)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-6
    k_layers: int = 2
    batch_size: int = 1024
    patience: int = 30
    max_epochs: int = 1000
    rounds: int = 1
    seed: int = 0
    embedding_dim: int = 768
    normalize_before_loss: bool = True
    uniformity_exponent: str = "squared"
    adapter_layers: int = 2
    adapter_hidden: int = 768
    adapter_dropout: float = 0.2
    eval_metric: str = "ndcg@10"

    def loss_config(self) -> LossConfig:
        return LossConfig(
            normalize_before_loss=self.normalize_before_loss,
            uniformity_exponent=self.uniformity_exponent,
            batch_size=self.batch_size,
        )

    def validate(self) -> list:
        """All problems at once; off-grid but legal values only warn."""
        problems = []
        if self.learning_rate <= 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        elif self.learning_rate not in LR_GRID:
            logger.warning("learning_rate %g outside documented grid %s", self.learning_rate, LR_GRID)
        if self.weight_decay < 0:
            problems.append(f"weight_decay must be >= 0, got {self.weight_decay}")
        elif self.weight_decay not in WD_GRID:
            logger.warning("weight_decay %g outside documented grid %s", self.weight_decay, WD_GRID)
        if self.k_layers < 0:
            problems.append(f"k_layers must be >= 0, got {self.k_layers}")
        elif self.k_layers not in K_GRID:
            logger.warning("k_layers %d outside documented grid %s", self.k_layers, K_GRID)
        if self.patience < 1:
            problems.append(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            problems.append(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.rounds < 1:
            problems.append(f"rounds must be >= 1, got {self.rounds}")
        if self.embedding_dim < 1:
            problems.append(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if self.adapter_layers < 1:
            problems.append(f"adapter_layers must be >= 1, got {self.adapter_layers}")
        if self.adapter_hidden < 1:
            problems.append(f"adapter_hidden must be >= 1, got {self.adapter_hidden}")
        if not (0.0 <= self.adapter_dropout < 1.0):
            problems.append(f"adapter_dropout must be in [0,1), got {self.adapter_dropout}")
        if self.eval_metric != "ndcg@10":
            problems.append(f"eval_metric is fixed to ndcg@10, got {self.eval_metric!r}")
        problems.extend(self.loss_config().validate())
        return problems

    def to_kv(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            out[f.name] = value
        return out

    @classmethod
    def from_kv(cls, pairs: dict) -> "TrainConfig":
        kwargs = {}
        problems = []
        known = {f.name: f for f in fields(cls)}
        for key, raw in pairs.items():
            f = known.get(key)
            if f is None:
                problems.append(f"unknown config key {key!r}")
                continue
            try:
                if f.type == "bool":
                    if str(raw).lower() not in ("true", "false"):
                        raise ValueError(raw)
                    kwargs[key] = str(raw).lower() == "true"
                elif f.type == "int":
                    kwargs[key] = int(raw)
                elif f.type == "float":
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = str(raw)
            except ValueError:
                problems.append(f"config key {key!r}: cannot parse {raw!r} as {f.type}")
        if problems:
            raise ConfigError(problems)
        return cls(**kwargs)


@dataclass
class EpochRecord:
    phase: str
    epoch: int
    train_loss: float
    valid_recall10: float
    valid_ndcg10: float

    def log_line(self) -> str:
        return (
            f"{self.phase}\t{self.epoch}\t{self.train_loss:.8f}"
            f"\t{self.valid_recall10:.6f}\t{self.valid_ndcg10:.6f}"
        )

    @classmethod
    def from_log_line(cls, line: str) -> "EpochRecord":
        phase, epoch, loss, r10, n10 = line.rstrip("\n").split("\t")
        return cls(phase, int(epoch), float(loss), float(r10), float(n10))


@dataclass
class PhaseSummary:
    label: str
    best_epoch: int
    best_ndcg10: float
    epochs_run: int


@dataclass
class TrainData:
    splits: SplitBundle
    graph: BipartiteGraph
    item_embeddings: EmbeddingTable

    @classmethod
    def build(cls, splits: SplitBundle, item_embeddings: EmbeddingTable) -> "TrainData":
        return cls(splits=splits, graph=build_graph(splits.train), item_embeddings=item_embeddings)


@dataclass
class TrainedModel:
    user_layer0: EmbeddingTable
    item_contextual: EmbeddingTable
    adapter: MlpAdapter
    cached_user_final: EmbeddingTable
    cached_item_final_transformed: EmbeddingTable
    config: TrainConfig
    history: list = field(default_factory=list)
    phase_summaries: list = field(default_factory=list)
    best_phase: str = ""


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    t: int
    m: list
    v: list

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(t=0, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float, weight_decay: float, decay_mask=None):
    """One in-place Adam update with bias correction.

    Weight decay enters as an L2 gradient term on parameters whose
    decay_mask entry is true (all, when no mask is given).
    """
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    state.t += 1
    t = state.t
    for idx, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"param {idx}: shape {p.shape} vs grad {g.shape}")
        if weight_decay and (decay_mask is None or decay_mask[idx]):
            g = g + weight_decay * p
        m = state.m[idx]
        v = state.v[idx]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params, state


# ---------------------------------------------------------------------------
# Phase loop
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    user0: np.ndarray
    adapter: MlpAdapter
    shuffle_rng: np.random.Generator


def _phase_label(phase: str, round_index: int) -> str:
    return f"{phase}:{round_index}"


def _trainable_params(phase, state: TrainState):
    if phase == ITEM_TUTORING:
        return [state.user0], [True]
    params = state.adapter.parameters()
    # weights decay, biases do not
    return params, [idx % 2 == 0 for idx in range(len(params))]


def _snapshot(phase, state: TrainState):
    if phase == ITEM_TUTORING:
        return [state.user0.copy()]
    return state.adapter.copy_parameters()


def _restore(phase, state: TrainState, snap):
    if phase == ITEM_TUTORING:
        state.user0[:] = snap[0]
    else:
        state.adapter.set_parameters([p.copy() for p in snap])


def run_phase(phase, data: TrainData, state: TrainState, config: TrainConfig, label=None, log_fn=None):
    """Train one phase to early stopping and restore its best epoch."""
    if phase not in (ITEM_TUTORING, USER_TUTORING):
        raise ValueError(f"unknown phase {phase!r}")
    edges = data.splits.train.pairs
    if len(edges) == 0:
        raise DataError("empty train set")
    label = label or phase
    item0 = np.asarray(data.item_embeddings.matrix, dtype=np.float64)
    pstate = PhaseState(
        graph=data.graph,
        user0=state.user0,
        item0=item0,
        adapter=state.adapter,
        k_layers=config.k_layers,
        loss=config.loss_config(),
    )
    params, decay_mask = _trainable_params(phase, state)
    adam = AdamState.for_params(params)
    eval_mode = WITHOUT_MLP if phase == ITEM_TUTORING else WITH_MLP

    best_metric = -np.inf
    best_epoch = 0
    best_snap = _snapshot(phase, state)
    stale = 0
    history = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = state.shuffle_rng.permutation(len(edges))
        losses = []
        for start in range(0, len(edges), config.batch_size):
            take = perm[start : start + config.batch_size]
            batch = (edges[take, 0], edges[take, 1])
            loss, grads = phase_loss(phase, batch, pstate)
            grad_list = [grads["user0"]] if phase == ITEM_TUTORING else [
                g for pair in grads["adapter"] for g in pair
            ]
            adam_step(params, grad_list, adam, config.learning_rate, config.weight_decay, decay_mask)
            losses.append(loss)

        user_vecs, item_vecs = inference_tables(
            data.graph, state.user0, item0, state.adapter, config.k_layers, eval_mode
        )
        report = evaluate_ranking(
            user_vecs, data.splits, split="valid", ks=(10,), item_vecs=item_vecs, mode_label=eval_mode
        )
        record = EpochRecord(label, epoch, float(np.mean(losses)), report.recall[10], report.ndcg[10])
        history.append(record)
        if log_fn is not None:
            log_fn(record)

        if report.ndcg[10] > best_metric:
            best_metric = report.ndcg[10]
            best_epoch = epoch
            best_snap = _snapshot(phase, state)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    _restore(phase, state, best_snap)
    return PhaseSummary(label=label, best_epoch=best_epoch, best_ndcg10=float(best_metric), epochs_run=epoch), history


def item_tutoring_phase(data: TrainData, state: TrainState, config: TrainConfig, label=None, log_fn=None):
    """Items teach: update the user table against frozen contextual items."""
    return run_phase(ITEM_TUTORING, data, state, config, label, log_fn)


def user_tutoring_phase(data: TrainData, state: TrainState, config: TrainConfig, label=None, log_fn=None):
    """Users teach: update only the adapter, users frozen."""
    return run_phase(USER_TUTORING, data, state, config, label, log_fn)


# ---------------------------------------------------------------------------
# Full schedule
# ---------------------------------------------------------------------------


def _f32_round(array: np.ndarray) -> np.ndarray:
    return array.astype(np.float32).astype(np.float64)


def _rounded_adapter(adapter: MlpAdapter) -> MlpAdapter:
    clone = init_adapter(
        adapter.dim,
        adapter.layer_count,
        adapter.weights[0].shape[1] if adapter.layer_count > 1 else adapter.dim,
        adapter.dropout_rate,
        adapter.seed,
    )
    clone.set_parameters([_f32_round(p) for p in adapter.parameters()])
    return clone


def _freeze_check(before_bytes: bytes, table: np.ndarray, what: str) -> None:
    if before_bytes != table.tobytes():
        raise AssertionError(f"freeze contract violated: {what} changed during training")


def train(
    config: TrainConfig,
    data: TrainData,
    log_fn=None,
    checkpoint_path=None,
    resume_path=None,
    phase_hook=None,
) -> TrainedModel:
    """Run `rounds` alternations of the two phases and pick the best.

    Every phase's best-epoch snapshot competes on validation NDCG@10;
    the winner becomes the returned model. `checkpoint_path` makes the
    trainer write an atomic resume checkpoint after each phase;
    `resume_path` continues from such a file.
    """
    problems = config.validate()
    if problems:
        raise ConfigError(problems)

    item_table = data.item_embeddings
    user_count = data.graph.user_count
    if item_table.node_count != data.graph.item_count:
        raise DataError(
            f"embedding table has {item_table.node_count} items, "
            f"graph has {data.graph.item_count}"
        )
    dim = item_table.dim
    item_bytes = item_table.matrix.tobytes()

    seed_user, seed_adapter, seed_shuffle = np.random.SeedSequence(config.seed).spawn(3)
    rng_user = np.random.default_rng(seed_user)
    state = TrainState(
        user0=rng_user.normal(0.0, USER_INIT_SCALE, size=(user_count, dim)),
        adapter=init_adapter(
            dim,
            config.adapter_layers,
            config.adapter_hidden,
            config.adapter_dropout,
            seed=int(seed_adapter.generate_state(1)[0]),
        ),
        shuffle_rng=np.random.default_rng(seed_shuffle),
    )

    history = []
    summaries = []
    snapshots = {}  # label -> (user0 copy, adapter params copy)
    completed = []

    if resume_path is not None:
        completed = _load_resume(resume_path, config, state, history, summaries, snapshots)

    for round_index in range(1, config.rounds + 1):
        for phase in (ITEM_TUTORING, USER_TUTORING):
            label = _phase_label(phase, round_index)
            if label in completed:
                continue
            user_before = state.user0.tobytes() if phase == USER_TUTORING else None
            summary, phase_history = run_phase(phase, data, state, config, label, log_fn)
            if phase == USER_TUTORING:
                _freeze_check(user_before, state.user0, "user table")
            _freeze_check(item_bytes, item_table.matrix, "item contextual table")
            history.extend(phase_history)
            summaries.append(summary)
            snapshots[label] = (state.user0.copy(), state.adapter.copy_parameters())
            completed.append(label)
            if checkpoint_path is not None:
                _save_resume(checkpoint_path, config, state, history, summaries, snapshots, completed)
            if phase_hook is not None:
                phase_hook(summary)

    best = max(summaries, key=lambda s: s.best_ndcg10)
    best_user0, best_adapter_params = snapshots[best.label]

    # snap trained parameters to f32 so the cached tables recomputed from a
    # reloaded checkpoint match the stored ones bit for bit
    final_user0 = _f32_round(best_user0)
    final_adapter = _rounded_adapter(state.adapter)
    final_adapter.set_parameters([_f32_round(p) for p in best_adapter_params])

    item64 = np.asarray(item_table.matrix, dtype=np.float64)
    transformed = final_adapter.forward(item64, train=False)
    cached_user, cached_item = propagate(data.graph, final_user0, transformed, config.k_layers)

    return TrainedModel(
        user_layer0=EmbeddingTable(final_user0, trainable=True, node_kind="user"),
        item_contextual=EmbeddingTable(
            np.asarray(item_table.matrix, dtype=np.float32), trainable=False, node_kind="item"
        ),
        adapter=final_adapter,
        cached_user_final=EmbeddingTable(cached_user, trainable=False, node_kind="user"),
        cached_item_final_transformed=EmbeddingTable(cached_item, trainable=False, node_kind="item"),
        config=config,
        history=history,
        phase_summaries=summaries,
        best_phase=best.label,
    )


# ---------------------------------------------------------------------------
# Checkpoint files
# ---------------------------------------------------------------------------


def _adapter_meta(adapter: MlpAdapter) -> dict:
    return {
        "adapter.layer_count": adapter.layer_count,
        "adapter.dropout_rate": adapter.dropout_rate,
        "adapter.seed": adapter.seed,
    }


def _summary_kv(summaries) -> dict:
    # phase labels carry ':' which kv keys cannot, so index the keys
    return {
        f"summary.{idx}": f"{s.label} {s.best_epoch} {s.best_ndcg10:.10f} {s.epochs_run}"
        for idx, s in enumerate(summaries)
    }


def _summaries_from_kv(kv) -> list:
    keys = sorted(
        (k for k in kv if k.startswith("summary.")), key=lambda k: int(k.split(".", 1)[1])
    )
    out = []
    for key in keys:
        label, epoch, metric, run = kv[key].split()
        out.append(PhaseSummary(label, int(epoch), float(metric), int(run)))
    return out


def _adapter_tensors(prefix: str, params) -> dict:
    out = {}
    for idx, p in enumerate(params):
        kind = "w" if idx % 2 == 0 else "b"
        out[f"{prefix}.{kind}{idx // 2}"] = p
    return out


def _adapter_from_tensors(prefix, tensors, layer_count, dropout_rate, seed) -> MlpAdapter:
    weights, biases = [], []
    for l in range(layer_count):
        weights.append(np.asarray(tensors[f"{prefix}.w{l}"], dtype=np.float64))
        biases.append(np.asarray(tensors[f"{prefix}.b{l}"], dtype=np.float64).ravel())
    return MlpAdapter(weights, biases, dropout_rate, seed)


def save_model(path, model: TrainedModel) -> None:
    """Write the final-model CCMDL1 file (all tensors f32)."""
    kv = {"kind": "model", "format_version": 1, "best_phase": model.best_phase}
    kv.update({f"config.{k}": v for k, v in model.config.to_kv().items()})
    kv.update(_adapter_meta(model.adapter))
    kv.update(_summary_kv(model.phase_summaries))
    tensors = {
        "user_layer0": model.user_layer0.matrix.astype(np.float32),
        "item_contextual": model.item_contextual.matrix.astype(np.float32),
        "cached_user_final": model.cached_user_final.matrix.astype(np.float32),
        "cached_item_final_transformed": model.cached_item_final_transformed.matrix.astype(
            np.float32
        ),
    }
    tensors.update(
        {k: v.astype(np.float32) for k, v in _adapter_tensors("adapter", model.adapter.parameters()).items()}
    )
    write_container(path, kv, tensors)


def load_model(path) -> TrainedModel:
    kv, tensors = read_container(path)
    if kv.get("kind") != "model":
        raise FormatError(f"{path}: not a model checkpoint (kind={kv.get('kind')!r})")
    config = TrainConfig.from_kv(
        {k[len("config.") :]: v for k, v in kv.items() if k.startswith("config.")}
    )
    adapter = _adapter_from_tensors(
        "adapter",
        tensors,
        int(kv["adapter.layer_count"]),
        float(kv["adapter.dropout_rate"]),
        int(kv["adapter.seed"]),
    )
    return TrainedModel(
        user_layer0=EmbeddingTable(tensors["user_layer0"], trainable=True, node_kind="user"),
        item_contextual=EmbeddingTable(tensors["item_contextual"], trainable=False, node_kind="item"),
        adapter=adapter,
        cached_user_final=EmbeddingTable(tensors["cached_user_final"], node_kind="user"),
        cached_item_final_transformed=EmbeddingTable(
            tensors["cached_item_final_transformed"], node_kind="item"
        ),
        config=config,
        history=[],
        phase_summaries=_summaries_from_kv(kv),
        best_phase=kv.get("best_phase", ""),
    )


def _save_resume(path, config, state, history, summaries, snapshots, completed) -> None:
    kv = {
        "kind": "resume",
        "format_version": 1,
        "completed": ",".join(completed),
        "shuffle_rng": json.dumps(state.shuffle_rng.bit_generator.state),
        "dropout_rng": json.dumps(state.adapter.rng_state()),
    }
    kv.update({f"config.{k}": v for k, v in config.to_kv().items()})
    kv.update(_adapter_meta(state.adapter))
    kv.update(_summary_kv(summaries))
    for idx, record in enumerate(history):
        kv[f"history.{idx}"] = record.log_line().replace("\t", " | ")
    tensors = {"state.user0": state.user0}
    tensors.update(_adapter_tensors("state.adapter", state.adapter.parameters()))
    for label, (user0, params) in snapshots.items():
        tensors[f"snap.{label}.user0"] = user0
        tensors.update(_adapter_tensors(f"snap.{label}.adapter", params))
    write_container(path, kv, tensors)


def _load_resume(path, config, state, history, summaries, snapshots):
    kv, tensors = read_container(path)
    if kv.get("kind") != "resume":
        raise FormatError(f"{path}: not a resume checkpoint (kind={kv.get('kind')!r})")
    stored = {k[len("config.") :]: v for k, v in kv.items() if k.startswith("config.")}
    if TrainConfig.from_kv(stored) != config:
        raise ConfigError(f"{path}: checkpoint config differs from requested config")
    completed = [c for c in kv.get("completed", "").split(",") if c]

    state.user0[:] = tensors["state.user0"]
    layer_count = int(kv["adapter.layer_count"])
    params = []
    for l in range(layer_count):
        params.extend(
            (tensors[f"state.adapter.w{l}"], tensors[f"state.adapter.b{l}"].ravel())
        )
    state.adapter.set_parameters(params)
    state.shuffle_rng.bit_generator.state = json.loads(kv["shuffle_rng"])
    state.adapter.set_rng_state(json.loads(kv["dropout_rng"]))

    hist_keys = sorted(
        (k for k in kv if k.startswith("history.")), key=lambda k: int(k.split(".", 1)[1])
    )
    for key in hist_keys:
        history.append(EpochRecord.from_log_line(kv[key].replace(" | ", "\t")))
    summaries.extend(_summaries_from_kv(kv))
    for label in completed:
        user0 = tensors[f"snap.{label}.user0"]
        params = []
        for l in range(layer_count):
            params.extend(
                (tensors[f"snap.{label}.adapter.w{l}"], tensors[f"snap.{label}.adapter.b{l}"].ravel())
            )
        snapshots[label] = (user0, params)
    return completed
