"""embed-export command line tool."""

from __future__ import annotations

import argparse
import logging
import sys

from . import DEFAULT_INSTRUCTION, DEFAULT_MODEL
from .documents import read_documents
from .sentences import SUPPORTED_MODELS, build_sentence, encoder_for
from .writer import write_embedding_file

logger = logging.getLogger(__name__)


def export(docs_path, model_name, instruction, out_path) -> int:
    """Embed every document and write the CCEMB1 file; returns row count."""
    docs = read_documents(docs_path)
    encoder = encoder_for(model_name)
    sentences = []
    for doc in docs:
        sentence = build_sentence(doc)
        if not sentence:
            logger.warning("item %s has no text fields; embedding empty sentence", doc.item_id)
        sentences.append(sentence)
    used_instruction = instruction if encoder.instruction_tuned else None
    if instruction and not encoder.instruction_tuned:
        logger.info("model %s is not instruction-tuned; instruction ignored", model_name)
    matrix = encoder.encode(sentences, instruction=used_instruction)
    if matrix.shape != (len(docs), encoder.dim):
        raise RuntimeError(
            f"encoder returned shape {matrix.shape}, expected {(len(docs), encoder.dim)}"
        )
    write_embedding_file(out_path, [d.item_id for d in docs], matrix)
    return len(docs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Embed item metadata sentences and write a CCEMB1 file.",
    )
    parser.add_argument("--docs", required=True, help="JSONL file of item documents")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help=f"encoder name (default {DEFAULT_MODEL}); one of: "
                             + ", ".join(SUPPORTED_MODELS))
    parser.add_argument("--instruction", default=DEFAULT_INSTRUCTION,
                        help="instruction text for instruction-tuned encoders")
    parser.add_argument("--out", required=True, help="output CCEMB1 path")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        count = export(args.docs, args.model, args.instruction, args.out)
    except FileNotFoundError as exc:
        print(f"embed-export: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"embed-export: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} embeddings to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
