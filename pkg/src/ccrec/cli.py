"""Command-line surface: preprocess, train, eval, inspect, synth.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. All
randomness flows from each command's --seed flag.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import kvdoc, manifest
from .dataset import (
    build_graph,
    cold_item_split,
    holdout_split,
    k_core_filter,
    load_embeddings,
    load_interactions,
    load_splits,
    read_embedding_header,
    save_splits,
)
from .errors import ConfigError, DataError
from .evaluate import (
    DEFAULT_KS,
    MODES,
    evaluate_model,
    export_projections,
)
from .synth import SynthConfig, write_dataset
from .trainer import TrainConfig, TrainData, load_model, save_model, train

PROG = "ccrec"


class UsageError(Exception):
    pass


def _require_file(path, what) -> Path:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def _require_dir(path, what) -> Path:
    path = Path(path)
    if not path.is_dir():
        raise UsageError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------


def _parse_ratios(text: str):
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--ratios expects three comma-separated numbers, got {text!r}")
    if len(parts) != 3:
        raise UsageError(f"--ratios expects three values, got {len(parts)}")
    return parts


def cmd_preprocess(args) -> int:
    inter_path = _require_file(args.interactions, "interactions file")
    out_dir = Path(args.out)
    ratios = _parse_ratios(args.ratios)

    inters = load_interactions(inter_path)
    print(f"loaded {len(inters)} interactions, {inters.user_count} users, {inters.item_count} items")
    filtered = k_core_filter(inters, args.k_core)
    print(
        f"{args.k_core}-core kept {len(filtered)} interactions, "
        f"{filtered.user_count} users, {filtered.item_count} items"
    )
    warm, cold_items, cold_test = cold_item_split(filtered, args.cold_fraction, args.seed)
    bundle = holdout_split(warm, ratios, args.seed + 1, cold_items=cold_items, cold_test=cold_test)
    print(
        f"splits: train={len(bundle.train)} valid={len(bundle.valid)} "
        f"test={len(bundle.test)} cold_items={len(cold_items)} cold_test={len(cold_test)}"
    )

    if args.embeddings is not None:
        emb_path = _require_file(args.embeddings, "embedding file")
        load_embeddings(emb_path, filtered.item_ids)  # coverage check only
        print(f"embedding file covers all {filtered.item_count} items")

    save_splits(
        out_dir,
        bundle,
        meta={
            "seed": args.seed,
            "k_core": args.k_core,
            "cold_fraction": args.cold_fraction,
            "ratios": args.ratios,
        },
    )
    outputs = manifest.collect_outputs(
        out_dir,
        ["users.tsv", "items.tsv", "train.tsv", "valid.tsv", "test.tsv",
         "cold_test.tsv", "cold_items.txt", "splits.manifest"],
    )
    manifest.write_run_manifest(
        out_dir / "manifest.kv",
        "preprocess",
        params={
            "seed": args.seed,
            "k_core": args.k_core,
            "cold_fraction": args.cold_fraction,
            "ratios": args.ratios,
        },
        inputs={"interactions": inter_path},
        outputs=outputs,
    )
    print(f"wrote {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_FLAG_TO_FIELD = {
    "learning_rate": "learning_rate",
    "weight_decay": "weight_decay",
    "k_layers": "k_layers",
    "batch_size": "batch_size",
    "patience": "patience",
    "max_epochs": "max_epochs",
    "rounds": "rounds",
    "seed": "seed",
    "dim": "embedding_dim",
    "uniformity": "uniformity_exponent",
    "adapter_layers": "adapter_layers",
    "adapter_hidden": "adapter_hidden",
    "adapter_dropout": "adapter_dropout",
}


def _resolve_train_config(args) -> TrainConfig:
    """defaults < config file < explicit CLI flags, validated all at once."""
    pairs = {}
    if args.config is not None:
        config_path = _require_file(args.config, "config file")
        pairs.update(kvdoc.read(config_path))
    for flag, fieldname in _FLAG_TO_FIELD.items():
        value = getattr(args, flag)
        if value is not None:
            pairs[fieldname] = value
    if args.normalize is not None:
        pairs["normalize_before_loss"] = "true" if args.normalize == "on" else "false"
    config = TrainConfig.from_kv({k: str(v) for k, v in pairs.items()})
    problems = config.validate()
    if problems:
        raise ConfigError(problems)
    return config


def cmd_train(args) -> int:
    data_dir = _require_dir(args.data, "data directory")
    emb_path = _require_file(args.embeddings, "embedding file")
    out_dir = Path(args.out)
    config = _resolve_train_config(args)

    count, dim = read_embedding_header(emb_path)
    if dim != config.embedding_dim:
        raise ConfigError(
            f"embedding file dim {dim} does not match configured dim "
            f"{config.embedding_dim} (use --dim to override)"
        )

    splits = load_splits(data_dir)
    item_table = load_embeddings(emb_path, splits.train.item_ids, expected_dim=config.embedding_dim)
    data = TrainData.build(splits, item_table)
    out_dir.mkdir(parents=True, exist_ok=True)

    metrics_path = out_dir / "metrics.log"
    resume_ckpt = out_dir / "resume.ccmdl"
    resume_from = None
    if args.resume:
        if resume_ckpt.is_file():
            resume_from = resume_ckpt
            print(f"resuming from {resume_ckpt}")
        else:
            print("no resume checkpoint found, starting fresh")

    with open(metrics_path, "a", encoding="utf-8") as log_fh:

        def log_fn(record):
            log_fh.write(record.log_line() + "\n")
            log_fh.flush()

        def phase_hook(summary):
            print(
                f"phase {summary.label}: best epoch {summary.best_epoch} "
                f"valid ndcg@10 {summary.best_ndcg10:.4f} ({summary.epochs_run} epochs)"
            )

        model = train(
            config,
            data,
            log_fn=log_fn,
            checkpoint_path=resume_ckpt,
            resume_path=resume_from,
            phase_hook=phase_hook,
        )

    model_path = out_dir / "model.ccmdl"
    save_model(model_path, model)
    manifest.write_run_manifest(
        out_dir / "manifest.kv",
        "train",
        params=config.to_kv(),
        inputs={"embeddings": emb_path, "train.tsv": data_dir / "train.tsv"},
        outputs={"model.ccmdl": model_path},
    )
    print(f"best phase {model.best_phase}; wrote {model_path}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _parse_topk(text: str):
    try:
        ks = tuple(int(k) for k in text.split(","))
    except ValueError:
        raise UsageError(f"--topk expects comma-separated integers, got {text!r}")
    if not ks or any(k < 1 for k in ks):
        raise UsageError(f"--topk values must be >= 1, got {text!r}")
    return ks


def cmd_eval(args) -> int:
    data_dir = _require_dir(args.data, "data directory")
    model_path = _require_file(args.model, "model checkpoint")
    ks = _parse_topk(args.topk)

    splits = load_splits(data_dir)
    model = load_model(model_path)
    if model.user_layer0.node_count != splits.train.user_count:
        raise ConfigError(
            f"checkpoint has {model.user_layer0.node_count} users, "
            f"data has {splits.train.user_count}"
        )
    if model.item_contextual.node_count != splits.train.item_count:
        raise ConfigError(
            f"checkpoint has {model.item_contextual.node_count} items, "
            f"data has {splits.train.item_count}"
        )
    if args.dim is not None and model.item_contextual.dim != args.dim:
        raise ConfigError(
            f"checkpoint dim {model.item_contextual.dim} does not match --dim {args.dim}"
        )

    graph = build_graph(splits.train)
    split = "cold_test" if args.cold else args.split
    modes = MODES if args.mode == "both" else (args.mode,)
    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    for mode in modes:
        report = evaluate_model(model, graph, splits, split=split, mode=mode, ks=ks)
        print(f"# {report.setting} {report.split} {mode}")
        for key, value in report.to_kv().items():
            print(f"{key}: {value}")
        if out_dir is not None:
            stem = f"report_{report.setting}_{report.split}_{mode}"
            report.write(out_dir / f"{stem}.kv", out_dir / f"{stem}.json")
    if out_dir is not None:
        print(f"wrote reports to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# inspect
# ---------------------------------------------------------------------------


def cmd_inspect(args) -> int:
    if args.header is None and args.model is None:
        raise UsageError("inspect needs --header FILE or --model FILE --out FILE")
    if args.header is not None:
        path = _require_file(args.header, "embedding file")
        count, dim = read_embedding_header(path)
        print("magic: CCEMB1")
        print(f"count: {count}")
        print(f"dim: {dim}")
        return 0
    model_path = _require_file(args.model, "model checkpoint")
    if args.out is None:
        raise UsageError("--out is required for projection export")
    model = load_model(model_path)
    rows = export_projections(model, args.out)
    print(f"wrote {rows} projection rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    config = SynthConfig(
        users=args.users,
        items=args.items,
        clusters=args.clusters,
        dim=args.dim,
        p_in=args.p_in,
        p_out=args.p_out,
        seed=args.seed,
        center_scale=args.center_scale,
        noise_scale=args.noise_scale,
        offset_scale=args.offset_scale,
    )
    problems = config.validate()
    if problems:
        raise ConfigError(problems)
    inter_path, emb_path = write_dataset(args.out, config)
    manifest.write_run_manifest(
        Path(args.out) / "manifest.kv",
        "synth",
        params={k: getattr(config, k) for k in (
            "users", "items", "clusters", "dim", "p_in", "p_out",
            "seed", "center_scale", "noise_scale", "offset_scale",
        )},
        inputs={},
        outputs={"interactions.tsv": inter_path, "items.ccemb": emb_path},
    )
    print(f"wrote {inter_path} and {emb_path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Collaborative-contextual recommender: preprocess, train, evaluate, inspect.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter interactions and write splits")
    p.add_argument("--interactions", required=True)
    p.add_argument("--embeddings", default=None, help="optional CCEMB1 file to validate coverage")
    p.add_argument("--out", required=True)
    p.add_argument("--k-core", type=int, default=5, dest="k_core")
    p.add_argument("--cold-fraction", type=float, default=0.05, dest="cold_fraction")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="run the two-phase training schedule")
    p.add_argument("--data", required=True, help="preprocess output directory")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="key-value config file")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")
    p.add_argument("--weight-decay", type=float, default=None, dest="weight_decay")
    p.add_argument("--k-layers", type=int, default=None, dest="k_layers")
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None, dest="max_epochs")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dim", type=int, default=None, help="expected embedding dim (default 768)")
    p.add_argument("--normalize", choices=("on", "off"), default=None)
    p.add_argument("--uniformity", choices=("squared", "literal"), default=None)
    p.add_argument("--adapter-layers", type=int, default=None, dest="adapter_layers")
    p.add_argument("--adapter-hidden", type=int, default=None, dest="adapter_hidden")
    p.add_argument("--adapter-dropout", type=float, default=None, dest="adapter_dropout")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="full-ranking reports for a trained model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--cold", action="store_true", help="evaluate the cold-item split")
    p.add_argument("--mode", choices=MODES + ("both",), default="both")
    p.add_argument("--topk", default=",".join(str(k) for k in DEFAULT_KS))
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="projection export and file header dumps")
    p.add_argument("--model", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--header", default=None, help="print CCEMB1 header fields")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("synth", help="planted-cluster synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=120)
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--p-in", type=float, default=0.3, dest="p_in")
    p.add_argument("--p-out", type=float, default=0.01, dest="p_out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--center-scale", type=float, default=1.0, dest="center_scale")
    p.add_argument("--noise-scale", type=float, default=0.3, dest="noise_scale")
    p.add_argument("--offset-scale", type=float, default=3.0, dest="offset_scale")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"{PROG}: config error: {problem}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"{PROG}: data error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
