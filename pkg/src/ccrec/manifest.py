"""Run manifests: inputs, outputs, resolved parameters, artifact checksums."""

from __future__ import annotations

import hashlib
from datetime import datetime, timezone
from pathlib import Path

from . import kvdoc


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_run_manifest(path, command: str, params: dict, inputs: dict, outputs: dict) -> dict:
    """Record one command run; outputs get checksums for reproducibility checks."""
    pairs = {
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    for key, value in sorted(params.items()):
        pairs[f"param.{key}"] = value
    for name, p in sorted(inputs.items()):
        pairs[f"input.{name}"] = str(p)
        pairs[f"input_checksum.{name}"] = sha256_file(p)
    for name, p in sorted(outputs.items()):
        pairs[f"output.{name}"] = str(p)
        pairs[f"checksum.{name}"] = sha256_file(p)
    kvdoc.write(path, pairs)
    return pairs


def artifact_checksums(manifest_path) -> dict:
    """name -> sha256 of every output artifact listed in a run manifest."""
    pairs = kvdoc.read(manifest_path)
    return {
        key[len("checksum.") :]: value
        for key, value in pairs.items()
        if key.startswith("checksum.")
    }


def collect_outputs(out_dir, names) -> dict:
    out_dir = Path(out_dir)
    return {name: out_dir / name for name in names if (out_dir / name).exists()}
