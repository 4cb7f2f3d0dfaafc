"""Sentence building and the encoder registry.

A sentence is the item's non-empty fields joined as "title. categories.
brand."; encoders truncate it to 512 tokens with their own tokenizer
before embedding. Pre-trained encoders need their weights available
locally; the hashed bag-of-words encoder always works and is
deterministic, which keeps the export pipeline testable offline.
"""

from __future__ import annotations

import hashlib
import logging
import re

import numpy as np

MAX_TOKENS = 512

logger = logging.getLogger(__name__)


def build_sentence(doc) -> str:
    """Join non-empty fields with sentence periods; may be empty."""
    parts = [f"{field.strip()}." for field in (doc.title, doc.categories, doc.brand) if field.strip()]
    return " ".join(parts)


class HashedBowEncoder:
    """Deterministic seeded-projection encoder, no model weights needed.

    Each token hashes to a fixed Gaussian vector; a sentence embeds as
    the normalized mean over its (truncated) tokens.
    """

    instruction_tuned = False

    def __init__(self, dim: int = 768):
        self.dim = dim
        self._cache = {}

    def tokenize(self, text: str):
        tokens = re.findall(r"\w+|[^\w\s]", text.lower())
        return tokens[:MAX_TOKENS]

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            seed = int.from_bytes(digest, "little")
            vec = np.random.default_rng(seed).standard_normal(self.dim)
            self._cache[token] = vec
        return vec

    def encode(self, sentences, instruction=None) -> np.ndarray:
        out = np.zeros((len(sentences), self.dim), dtype=np.float32)
        for row, sentence in enumerate(sentences):
            tokens = self.tokenize(sentence)
            if not tokens:
                continue  # empty sentence embeds as the zero vector
            total = np.zeros(self.dim)
            for token in tokens:
                total += self._token_vector(token)
            total /= len(tokens)
            norm = np.linalg.norm(total)
            if norm > 0:
                total /= norm
            out[row] = total.astype(np.float32)
        return out


class SentenceTransformerEncoder:
    """sentence-transformers models (MiniLM, mpnet, bge)."""

    instruction_tuned = False

    def __init__(self, model_id: str, dim: int):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise RuntimeError(
                f"model {model_id!r} needs the sentence-transformers package"
            ) from exc
        self._model = SentenceTransformer(model_id)
        self._model.max_seq_length = MAX_TOKENS
        self.dim = self._model.get_sentence_embedding_dimension() or dim

    def tokenize(self, text: str):
        ids = self._model.tokenizer(text, truncation=True, max_length=MAX_TOKENS)["input_ids"]
        return self._model.tokenizer.convert_ids_to_tokens(ids)

    def encode(self, sentences, instruction=None) -> np.ndarray:
        return np.asarray(
            self._model.encode(list(sentences), batch_size=32, show_progress_bar=False),
            dtype=np.float32,
        )


class InstructorEncoder:
    """Instruction-tuned encoder; pairs every sentence with the instruction."""

    instruction_tuned = True

    def __init__(self, model_id: str, dim: int):
        try:
            from InstructorEmbedding import INSTRUCTOR
        except ImportError as exc:
            raise RuntimeError(
                f"model {model_id!r} needs the InstructorEmbedding package"
            ) from exc
        self._model = INSTRUCTOR(model_id)
        self.dim = dim

    def tokenize(self, text: str):
        ids = self._model.tokenizer(text, truncation=True, max_length=MAX_TOKENS)["input_ids"]
        return self._model.tokenizer.convert_ids_to_tokens(ids)

    def encode(self, sentences, instruction=None) -> np.ndarray:
        instruction = instruction or ""
        pairs = [[instruction, sentence] for sentence in sentences]
        return np.asarray(self._model.encode(pairs, batch_size=32), dtype=np.float32)


class MeanPooledBertEncoder:
    """Plain BERT with mean pooling over the final hidden states."""

    instruction_tuned = False

    def __init__(self, model_id: str, dim: int):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise RuntimeError(f"model {model_id!r} needs transformers + torch") from exc
        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModel.from_pretrained(model_id)
        self._model.eval()
        self.dim = self._model.config.hidden_size

    def tokenize(self, text: str):
        ids = self._tokenizer(text, truncation=True, max_length=MAX_TOKENS)["input_ids"]
        return self._tokenizer.convert_ids_to_tokens(ids)

    def encode(self, sentences, instruction=None) -> np.ndarray:
        torch = self._torch
        out = []
        with torch.no_grad():
            for start in range(0, len(sentences), 32):
                batch = self._tokenizer(
                    list(sentences[start : start + 32]),
                    truncation=True,
                    max_length=MAX_TOKENS,
                    padding=True,
                    return_tensors="pt",
                )
                hidden = self._model(**batch).last_hidden_state
                mask = batch["attention_mask"].unsqueeze(-1)
                pooled = (hidden * mask).sum(1) / mask.sum(1).clamp(min=1)
                out.append(pooled.cpu().numpy())
        return np.concatenate(out).astype(np.float32)


# name -> (factory kind, model id, expected dim); short names follow the
# published evaluation list, full ids are accepted as aliases
_REGISTRY = {
    "hashed-bow-768": ("hashed", None, 768),
    "instructor-xl": ("instructor", "hkunlp/instructor-xl", 768),
    "all-MiniLM-L6-v2": ("sbert", "sentence-transformers/all-MiniLM-L6-v2", 384),
    "all-mpnet-base-v2": ("sbert", "sentence-transformers/all-mpnet-base-v2", 768),
    "bge-base-en-v1.5": ("sbert", "BAAI/bge-base-en-v1.5", 768),
    "bert-base-uncased": ("bert", "bert-base-uncased", 768),
}

_ALIASES = {model_id: name for name, (_, model_id, _) in _REGISTRY.items() if model_id}

SUPPORTED_MODELS = tuple(_REGISTRY)


def expected_dim(name: str) -> int:
    name = _ALIASES.get(name, name)
    if name not in _REGISTRY:
        raise ValueError(f"unknown model {name!r}; supported: {', '.join(SUPPORTED_MODELS)}")
    return _REGISTRY[name][2]


def encoder_for(name: str):
    name = _ALIASES.get(name, name)
    if name not in _REGISTRY:
        raise ValueError(f"unknown model {name!r}; supported: {', '.join(SUPPORTED_MODELS)}")
    kind, model_id, dim = _REGISTRY[name]
    if kind == "hashed":
        return HashedBowEncoder(dim)
    if kind == "instructor":
        return InstructorEncoder(model_id, dim)
    if kind == "sbert":
        return SentenceTransformerEncoder(model_id, dim)
    return MeanPooledBertEncoder(model_id, dim)
