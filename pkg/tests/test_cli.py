import json

import pytest

from ccrec import kvdoc
from ccrec.cli import main
from ccrec.manifest import artifact_checksums


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> preprocess -> train once; several tests read the results."""
    root = tmp_path_factory.mktemp("pipeline")
    raw = root / "raw"
    data = root / "data"
    run = root / "run"
    assert run_cli("synth", "--out", raw, "--users", 60, "--items", 50, "--clusters", 2,
                   "--dim", 8, "--p-in", 0.5, "--p-out", 0.05, "--seed", 3) == 0
    assert run_cli("preprocess", "--interactions", raw / "interactions.tsv",
                   "--embeddings", raw / "items.ccemb", "--out", data,
                   "--k-core", 2, "--cold-fraction", 0.05, "--seed", 4) == 0
    assert run_cli("train", "--data", data, "--embeddings", raw / "items.ccemb",
                   "--out", run, "--dim", 8, "--adapter-hidden", 8,
                   "--max-epochs", 6, "--patience", 4, "--seed", 5) == 0
    return root


def test_preprocess_writes_expected_files(pipeline):
    data = pipeline / "data"
    for name in ("users.tsv", "items.tsv", "train.tsv", "valid.tsv", "test.tsv",
                 "cold_test.tsv", "cold_items.txt", "splits.manifest", "manifest.kv"):
        assert (data / name).exists(), name
    manifest = kvdoc.read(data / "splits.manifest")
    assert manifest["k_core"] == "2"
    assert int(manifest["train_pairs"]) > 0


def test_train_outputs(pipeline):
    run = pipeline / "run"
    assert (run / "model.ccmdl").exists()
    assert (run / "resume.ccmdl").exists()
    log_lines = (run / "metrics.log").read_text().splitlines()
    phases = {line.split("\t")[0] for line in log_lines}
    assert phases == {"item_tutoring:1", "user_tutoring:1"}


def test_eval_writes_reports(pipeline, tmp_path):
    data, run = pipeline / "data", pipeline / "run"
    out = tmp_path / "reports"
    assert run_cli("eval", "--data", data, "--model", run / "model.ccmdl", "--out", out) == 0
    for mode in ("with_mlp", "without_mlp"):
        kv = kvdoc.read(out / f"report_warm_test_{mode}.kv")
        assert set(k for k in kv if k.startswith("recall@")) == {"recall@10", "recall@50"}
        record = json.loads((out / f"report_warm_test_{mode}.json").read_text())
        assert record["mode"] == mode


def test_eval_cold_single_mode(pipeline, tmp_path, capsys):
    data, run = pipeline / "data", pipeline / "run"
    assert run_cli("eval", "--data", data, "--model", run / "model.ccmdl",
                   "--cold", "--mode", "without_mlp") == 0
    printed = capsys.readouterr().out
    assert "# cold cold_test without_mlp" in printed
    assert "with_mlp" not in printed.replace("without_mlp", "")


def test_eval_topk_override(pipeline, tmp_path):
    data, run = pipeline / "data", pipeline / "run"
    out = tmp_path / "r"
    assert run_cli("eval", "--data", data, "--model", run / "model.ccmdl",
                   "--mode", "with_mlp", "--topk", "3", "--out", out) == 0
    kv = kvdoc.read(out / "report_warm_test_with_mlp.kv")
    assert "recall@3" in kv and "recall@10" not in kv


def test_eval_reports_reproducible(pipeline, tmp_path):
    data, run = pipeline / "data", pipeline / "run"
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    for out in (out1, out2):
        assert run_cli("eval", "--data", data, "--model", run / "model.ccmdl", "--out", out) == 0
    for name in ("report_warm_test_with_mlp.kv", "report_warm_test_without_mlp.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_inspect_header(pipeline, capsys):
    raw = pipeline / "raw"
    assert run_cli("inspect", "--header", raw / "items.ccemb") == 0
    out = capsys.readouterr().out
    assert "magic: CCEMB1" in out
    assert "count: 50" in out
    assert "dim: 8" in out


def test_inspect_bad_magic(tmp_path, capsys):
    bad = tmp_path / "bad.ccemb"
    bad.write_bytes(b"XXXXXX" + b"\x00" * 32)
    assert run_cli("inspect", "--header", bad) == 1
    assert "CCEMB1" in capsys.readouterr().err


def test_inspect_projections(pipeline, tmp_path):
    run = pipeline / "run"
    out = tmp_path / "proj.tsv"
    assert run_cli("inspect", "--model", run / "model.ccmdl", "--out", out) == 0
    lines = out.read_text().splitlines()
    kv = kvdoc.read(pipeline / "data" / "splits.manifest")
    expected = 2 * int(kv["items"]) + int(kv["users"])
    assert len(lines) == expected + 1


def test_missing_input_is_usage_error(tmp_path):
    assert run_cli("preprocess", "--interactions", tmp_path / "nope.tsv",
                   "--out", tmp_path / "o") == 2
    assert run_cli("train", "--data", tmp_path / "nope", "--embeddings",
                   tmp_path / "x.ccemb", "--out", tmp_path / "o") == 2


def test_config_errors_listed_all_at_once(pipeline, tmp_path, capsys):
    data, raw = pipeline / "data", pipeline / "raw"
    config = tmp_path / "bad.conf"
    config.write_text("learning_rate: -1\npatience: 0\nrounds: 0\n")
    rc = run_cli("train", "--data", data, "--embeddings", raw / "items.ccemb",
                 "--out", tmp_path / "o", "--config", config, "--dim", 8)
    assert rc == 2
    err = capsys.readouterr().err
    assert "learning_rate" in err
    assert "patience" in err
    assert "rounds" in err


def test_embedding_dim_mismatch_rejected(pipeline, tmp_path, capsys):
    data, raw = pipeline / "data", pipeline / "raw"
    rc = run_cli("train", "--data", data, "--embeddings", raw / "items.ccemb",
                 "--out", tmp_path / "o")  # default dim 768 vs file dim 8
    assert rc == 2
    assert "768" in capsys.readouterr().err


def test_eval_checkpoint_data_mismatch(pipeline, tmp_path, capsys):
    run = pipeline / "run"
    other_raw = tmp_path / "raw2"
    other_data = tmp_path / "data2"
    assert run_cli("synth", "--out", other_raw, "--users", 30, "--items", 20,
                   "--clusters", 2, "--dim", 8, "--p-in", 0.5, "--p-out", 0.05, "--seed", 9) == 0
    assert run_cli("preprocess", "--interactions", other_raw / "interactions.tsv",
                   "--out", other_data, "--k-core", 1, "--cold-fraction", 0.06, "--seed", 9) == 0
    rc = run_cli("eval", "--data", other_data, "--model", run / "model.ccmdl")
    assert rc == 2
    assert "checkpoint has" in capsys.readouterr().err


def test_config_file_with_cli_override(pipeline, tmp_path):
    data, raw = pipeline / "data", pipeline / "raw"
    config = tmp_path / "train.conf"
    config.write_text("embedding_dim: 8\nmax_epochs: 2\npatience: 2\nadapter_hidden: 8\nseed: 11\n")
    out = tmp_path / "o"
    assert run_cli("train", "--data", data, "--embeddings", raw / "items.ccemb",
                   "--out", out, "--config", config, "--max-epochs", 3) == 0
    manifest = kvdoc.read(out / "manifest.kv")
    assert manifest["param.max_epochs"] == "3"  # CLI overrides file
    assert manifest["param.embedding_dim"] == "8"


def test_checksum_reproducibility(tmp_path):
    """Same seeds -> identical artifact checksums across full reruns."""
    sums = []
    for name in ("one", "two"):
        root = tmp_path / name
        raw, data, run = root / "raw", root / "data", root / "run"
        assert run_cli("synth", "--out", raw, "--users", 40, "--items", 30, "--clusters", 2,
                       "--dim", 8, "--p-in", 0.55, "--p-out", 0.05, "--seed", 7) == 0
        assert run_cli("preprocess", "--interactions", raw / "interactions.tsv",
                       "--out", data, "--k-core", 2, "--cold-fraction", 0.05, "--seed", 8) == 0
        assert run_cli("train", "--data", data, "--embeddings", raw / "items.ccemb",
                       "--out", run, "--dim", 8, "--adapter-hidden", 8,
                       "--max-epochs", 4, "--patience", 3, "--seed", 9) == 0
        sums.append({
            "synth": artifact_checksums(raw / "manifest.kv"),
            "preprocess": artifact_checksums(data / "manifest.kv"),
            "train": artifact_checksums(run / "manifest.kv"),
        })
    assert sums[0] == sums[1]
    assert sums[0]["train"]["model.ccmdl"]  # model checksum recorded


def test_train_resume_flag(pipeline, tmp_path):
    data, raw = pipeline / "data", pipeline / "raw"
    out = tmp_path / "o"
    args = ["train", "--data", data, "--embeddings", raw / "items.ccemb", "--out", out,
            "--dim", 8, "--adapter-hidden", 8, "--max-epochs", 3, "--patience", 2, "--seed", 12]
    assert run_cli(*args) == 0
    first = (out / "model.ccmdl").read_bytes()
    # rerun with --resume: all phases already complete, model identical
    assert run_cli(*args, "--resume") == 0
    assert (out / "model.ccmdl").read_bytes() == first


def test_rounds_flag_produces_phase_blocks(pipeline, tmp_path):
    data, raw = pipeline / "data", pipeline / "raw"
    out = tmp_path / "o"
    assert run_cli("train", "--data", data, "--embeddings", raw / "items.ccemb",
                   "--out", out, "--dim", 8, "--adapter-hidden", 8,
                   "--max-epochs", 2, "--patience", 2, "--rounds", 3, "--seed", 13) == 0
    phases = {line.split("\t")[0] for line in (out / "metrics.log").read_text().splitlines()}
    assert len(phases) == 6


def test_synth_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli("synth", "--out", out, "--seed", 17) == 0
    assert (a / "interactions.tsv").read_bytes() == (b / "interactions.tsv").read_bytes()
    assert (a / "items.ccemb").read_bytes() == (b / "items.ccemb").read_bytes()
