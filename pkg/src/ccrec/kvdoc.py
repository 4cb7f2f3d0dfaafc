"""Flat "key: value" text documents.

Used for split manifests, run manifests, train configs and the config
block inside model checkpoints. One pair per line, UTF-8, '#' starts a
comment line, keys must not contain ':'.
"""

from __future__ import annotations

from .errors import FormatError


def dumps(pairs: dict) -> str:
    lines = []
    for key, value in pairs.items():
        key = str(key)
        if ":" in key or "\n" in key:
            raise ValueError(f"invalid key {key!r}")
        value = str(value)
        if "\n" in value:
            raise ValueError(f"value for {key!r} contains newline")
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + ("\n" if lines else "")


def loads(text: str) -> dict:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if ":" not in stripped:
            raise FormatError(f"line {lineno}: expected 'key: value', got {line!r}")
        key, value = stripped.split(":", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def write(path, pairs: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(pairs))


def read(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())
