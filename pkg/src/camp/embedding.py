"""Deterministic feature-hashed embeddings for code fragments.

Every fragment (a doc unit, a query string, a context payload) is reduced to
a bag of features, signed-hashed into a fixed number of buckets, and
L2-normalized. Each token yields a ``(text, lexical class)`` feature plus,
for indexed symbols, one extra feature per dependency target name, which is
what makes doc-unit embeddings dependency-aware. Identifiers additionally
contribute their lowercased word parts (snake_case and camelCase splits),
and strings/comments their inner words, so a prose query can still match
compound identifiers.

The hash is keyed blake2b, so vectors are stable across processes and
platforms. Bucket ``d_emb - 1`` is reserved: a fragment whose signed
features cancel exactly maps to that basis vector, keeping the unit-norm
invariant unconditional.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from . import lexer
from .errors import DimensionMismatchError, EmptyFragmentError

DEFAULT_DIM = 256

_WORD_RE = re.compile(r"[A-Za-z]+|[0-9]+")
_CAMEL_RE = re.compile(r"([a-z0-9])([A-Z])")
_SEP = "\x1f"
_WORD_CLASS = "w"


def word_parts(text: str) -> list[str]:
    """Lowercased word parts: splits snake_case, camelCase, and prose."""
    return [w.lower() for w in _WORD_RE.findall(_CAMEL_RE.sub(r"\1 \2", text))]


@dataclass(frozen=True)
class EmbeddingVector:
    """An L2-normalized real vector of the index-wide dimension."""

    values: np.ndarray
    norm_kind: str = "l2_normalized"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        v.setflags(write=False)
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"embedding norm {norm!r} is not 1 within 1e-9")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass
class FeatureBag:
    """Mutable accumulator of feature counts prior to hashing."""

    features: list[str] = field(default_factory=list)

    def add_token(self, text: str, cls: str, dep_targets: tuple[str, ...] = ()):
        self.features.append(token_feature(text, cls))
        for target in dep_targets:
            self.features.append(token_feature(text, cls, target))
        if cls in (lexer.IDENT, lexer.STRING, lexer.COMMENT):
            for word in word_parts(text):
                self.features.append(token_feature(word, _WORD_CLASS))


def token_feature(text: str, cls: str, dep_target: str | None = None) -> str:
    if dep_target is None:
        return f"{text}{_SEP}{cls}"
    return f"{text}{_SEP}{cls}{_SEP}{dep_target}"


def bucket_and_sign(feature: str, dim: int) -> tuple[int, float]:
    """Map a feature string to a hash bucket in [0, dim-1) and a sign.

    The last bucket is reserved for the zero-cancellation guard and never
    receives hashed features.
    """
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    h = int.from_bytes(digest, "little")
    bucket = h % (dim - 1)
    sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
    return bucket, sign


def embed_features(features: list[str], dim: int = DEFAULT_DIM) -> EmbeddingVector:
    if dim < 2:
        raise DimensionMismatchError("embedding dimension must be at least 2")
    if not features:
        raise EmptyFragmentError("empty fragment")
    values = np.zeros(dim, dtype=np.float64)
    for feature in features:
        bucket, sign = bucket_and_sign(feature, dim)
        values[bucket] += sign
    norm = float(np.linalg.norm(values))
    if norm < 1e-12:
        values = np.zeros(dim, dtype=np.float64)
        values[dim - 1] = 1.0  # guard basis vector
    else:
        values /= norm
    return EmbeddingVector(values)


def embed_text(
    text: str,
    dim: int = DEFAULT_DIM,
    profile: lexer.LanguageProfile | None = None,
) -> EmbeddingVector:
    """Embed a raw code or prose fragment (no dependency features)."""
    profile = profile or lexer.PROFILES["python"]
    bag = FeatureBag()
    for tok in profile.tokenize(text):
        if tok.cls in lexer.SYMBOL_CLASSES:
            bag.add_token(tok.text, tok.cls)
    if not bag.features:
        raise EmptyFragmentError("empty fragment")
    return embed_features(bag.features, dim)
