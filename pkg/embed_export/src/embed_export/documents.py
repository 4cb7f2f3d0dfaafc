"""Item documents: one JSON object per line with text metadata fields."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass
class ItemDocument:
    item_id: str
    title: str = ""
    categories: str = ""
    brand: str = ""


def read_documents(path) -> list:
    """Parse a JSONL documents file; item_ids must be non-empty and unique."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"documents file not found: {path}")
    docs = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            item_id = str(record.get("item_id", "") or "")
            if not item_id:
                raise ValueError(f"{path}:{lineno}: missing or empty item_id")
            if item_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate item_id {item_id!r}")
            seen.add(item_id)
            docs.append(
                ItemDocument(
                    item_id=item_id,
                    title=str(record.get("title", "") or ""),
                    categories=str(record.get("categories", "") or ""),
                    brand=str(record.get("brand", "") or ""),
                )
            )
    if not docs:
        raise ValueError(f"{path}: no documents")
    return docs
