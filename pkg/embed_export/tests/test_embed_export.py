import json

import numpy as np
import pytest

from embed_export import DEFAULT_MODEL
from embed_export.cli import export, main
from embed_export.documents import ItemDocument, read_documents
from embed_export.sentences import (
    MAX_TOKENS,
    SUPPORTED_MODELS,
    build_sentence,
    encoder_for,
    expected_dim,
)
from embed_export.writer import read_embedding_file


def write_docs(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")


def ten_items():
    return [
        {"item_id": f"i{k}", "title": f"Widget {k}", "categories": "Tools & Home",
         "brand": "Acme"}
        for k in range(10)
    ]


# ---------------------------------------------------------------------------
# sentences
# ---------------------------------------------------------------------------


def test_build_sentence_all_fields():
    doc = ItemDocument("x", title="USB cable", categories="Electronics", brand="Acme")
    assert build_sentence(doc) == "USB cable. Electronics. Acme."


def test_build_sentence_title_only():
    assert build_sentence(ItemDocument("x", title="title")) == "title."


def test_build_sentence_skips_empty_fields():
    doc = ItemDocument("x", title="Lamp", categories="", brand="  ")
    assert build_sentence(doc) == "Lamp."


def test_build_sentence_all_empty():
    assert build_sentence(ItemDocument("x")) == ""


def test_tokenizer_truncates_at_512():
    encoder = encoder_for(DEFAULT_MODEL)
    text = "word " * 600
    assert len(encoder.tokenize(text)) == MAX_TOKENS
    short = "just a few words"
    assert len(encoder.tokenize(short)) < MAX_TOKENS


def test_truncation_changes_nothing_below_boundary():
    encoder = encoder_for(DEFAULT_MODEL)
    text_511 = " ".join(f"w{k}" for k in range(511))
    text_600 = " ".join(f"w{k}" for k in range(600))
    a = encoder.encode([text_511])
    b = encoder.encode([" ".join(f"w{k}" for k in range(512))])
    c = encoder.encode([text_600])
    # beyond 512 tokens the extra words are invisible
    np.testing.assert_array_equal(b, c)
    assert not np.array_equal(a, b)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


def test_supported_models_cover_the_evaluated_plms():
    for name in ("instructor-xl", "all-MiniLM-L6-v2", "all-mpnet-base-v2",
                 "bge-base-en-v1.5", "bert-base-uncased"):
        assert name in SUPPORTED_MODELS


def test_expected_dims():
    assert expected_dim(DEFAULT_MODEL) == 768
    assert expected_dim("instructor-xl") == 768
    assert expected_dim("all-MiniLM-L6-v2") == 384
    assert expected_dim("hkunlp/instructor-xl") == 768  # alias


def test_unknown_model_rejected():
    with pytest.raises(ValueError, match="unknown model"):
        encoder_for("word2vec-large")


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------


def test_read_documents_round_trip(tmp_path):
    path = tmp_path / "docs.jsonl"
    write_docs(path, ten_items())
    docs = read_documents(path)
    assert len(docs) == 10
    assert docs[3].item_id == "i3"
    assert docs[3].brand == "Acme"


def test_read_documents_duplicate_id(tmp_path):
    path = tmp_path / "docs.jsonl"
    write_docs(path, [{"item_id": "a", "title": "x"}, {"item_id": "a", "title": "y"}])
    with pytest.raises(ValueError, match="duplicate item_id"):
        read_documents(path)


def test_read_documents_missing_id(tmp_path):
    path = tmp_path / "docs.jsonl"
    write_docs(path, [{"title": "x"}])
    with pytest.raises(ValueError, match="item_id"):
        read_documents(path)


def test_read_documents_bad_json(tmp_path):
    path = tmp_path / "docs.jsonl"
    path.write_text("{not json}\n")
    with pytest.raises(ValueError, match=":1"):
        read_documents(path)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def test_export_writes_header_count_and_default_dim(tmp_path):
    docs = tmp_path / "docs.jsonl"
    write_docs(docs, ten_items())
    out = tmp_path / "items.ccemb"
    assert export(docs, DEFAULT_MODEL, "", out) == 10
    ids, matrix = read_embedding_file(out)
    assert ids == [f"i{k}" for k in range(10)]
    assert matrix.shape == (10, 768)
    assert matrix.dtype == np.float32
    assert np.isfinite(matrix).all()


def test_export_deterministic(tmp_path):
    docs = tmp_path / "docs.jsonl"
    write_docs(docs, ten_items())
    a, b = tmp_path / "a.ccemb", tmp_path / "b.ccemb"
    export(docs, DEFAULT_MODEL, "", a)
    export(docs, DEFAULT_MODEL, "", b)
    assert a.read_bytes() == b.read_bytes()


def test_export_embeds_empty_sentence_as_zero(tmp_path):
    docs = tmp_path / "docs.jsonl"
    write_docs(docs, [{"item_id": "empty"}, {"item_id": "full", "title": "Lamp"}])
    out = tmp_path / "items.ccemb"
    export(docs, DEFAULT_MODEL, "", out)
    ids, matrix = read_embedding_file(out)
    assert (matrix[0] == 0).all()
    assert (matrix[1] != 0).any()


def test_cli_round_trip(tmp_path, capsys):
    docs = tmp_path / "docs.jsonl"
    write_docs(docs, ten_items())
    out = tmp_path / "items.ccemb"
    assert main(["--docs", str(docs), "--out", str(out)]) == 0
    assert "wrote 10 embeddings" in capsys.readouterr().out
    count_dim = read_embedding_file(out)[1].shape
    assert count_dim == (10, 768)


def test_cli_missing_docs(tmp_path, capsys):
    rc = main(["--docs", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o.ccemb")])
    assert rc == 2
    assert "not found" in capsys.readouterr().err


def test_cli_unknown_model(tmp_path, capsys):
    docs = tmp_path / "docs.jsonl"
    write_docs(docs, ten_items())
    rc = main(["--docs", str(docs), "--model", "bogus", "--out", str(tmp_path / "o.ccemb")])
    assert rc == 1
    assert "unknown model" in capsys.readouterr().err
