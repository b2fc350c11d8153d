"""Content retrieval: bilinear scoring of doc units against a fused query.

A query embedding is the renormalized weighted sum of the input-text
embedding, the context aggregate, and (when given) the user-query
embedding. Candidates are scored with the learned heuristic matrix via a
numerically stable softmax over ``emb(z)^T H emb(query)``; the doc unit
under the cursor is excluded so retrieval never returns the code being
edited.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from filelock import FileLock

from . import index as index_mod
from .context import ContextVector, N_SOURCES
from .errors import ConfigError, DimensionMismatchError, EmptyQueryError, IndexingError
from .index import DocUnit, IndexSnapshot

DEFAULT_K = 5

_PARAMS_MAGIC = b"CAMPPRM1"
_PARAMS_VERSION = 1


@dataclass(frozen=True)
class FusionWeights:
    """Convex mixing weights for query composition (renormalized over the
    parts actually present)."""

    input_text: float = 0.5
    context: float = 0.3
    user_query: float = 0.2

    def __post_init__(self):
        if min(self.input_text, self.context, self.user_query) < 0:
            raise ConfigError("fusion weights must be nonnegative")
        if self.input_text + self.context + self.user_query <= 0:
            raise ConfigError("fusion weights must not all be zero")


@dataclass(frozen=True)
class HeuristicMatrix:
    """Square bilinear form ranking doc units against queries."""

    values: np.ndarray
    nuclear_norm: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DimensionMismatchError(f"heuristic matrix must be square, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("heuristic matrix contains non-finite entries")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "nuclear_norm", float(np.linalg.svd(v, compute_uv=False).sum()))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> "HeuristicMatrix":
        return cls(np.eye(dim) * scale)


@dataclass(frozen=True)
class RetrievalResult:
    items: tuple[tuple[DocUnit, float], ...]
    query_digest: str
    n_candidates: int


def score(H: HeuristicMatrix | np.ndarray, query_emb, doc_embs) -> np.ndarray:
    """Softmax over bilinear scores; sums to one over all candidates."""
    Hv = H.values if isinstance(H, HeuristicMatrix) else np.asarray(H, dtype=np.float64)
    q = _vector_of(query_emb)
    docs = np.stack([_vector_of(d) for d in doc_embs])
    if docs.shape[0] == 0:
        raise ValueError("need at least one candidate")
    if Hv.shape != (q.shape[0], q.shape[0]) or docs.shape[1] != q.shape[0]:
        raise DimensionMismatchError(
            f"dimension mismatch: H {Hv.shape}, query {q.shape}, docs {docs.shape}"
        )
    scores = docs @ (Hv @ q)
    scores = scores - scores.max()
    expd = np.exp(scores)
    return expd / expd.sum()


def compose_query(
    snapshot: IndexSnapshot,
    context: ContextVector | None,
    input_text: str,
    user_query: str | None = None,
    fusion: FusionWeights = FusionWeights(),
) -> np.ndarray:
    """Renormalized weighted sum of the present query parts."""
    d = snapshot.config.d_emb
    parts: list[tuple[float, np.ndarray]] = []
    if input_text and fusion.input_text > 0:
        parts.append((fusion.input_text, index_mod.embed(snapshot, input_text).values))
    if context is not None and not context.is_zero() and fusion.context > 0:
        parts.append((fusion.context, context.aggregate))
    if user_query and fusion.user_query > 0:
        parts.append((fusion.user_query, index_mod.embed(snapshot, user_query).values))
    if not parts:
        raise EmptyQueryError("empty retrieval query")
    total = sum(w for w, _ in parts)
    u = np.zeros(d, dtype=np.float64)
    for w, v in parts:
        u += (w / total) * v
    norm = float(np.linalg.norm(u))
    if norm < 1e-12:
        u = np.zeros(d, dtype=np.float64)
        u[d - 1] = 1.0  # cancellation guard, same convention as the embedder
        return u
    return u / norm


def retrieve(
    snapshot: IndexSnapshot,
    context: ContextVector | None,
    input_text: str,
    user_query: str | None,
    H: HeuristicMatrix,
    K: int = DEFAULT_K,
    restrict_files: set[str] | None = None,
) -> RetrievalResult:
    """Top-K doc units under the bilinear softmax, cursor unit excluded."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if not snapshot.doc_units:
        raise IndexingError("snapshot has no doc units")

    cursor_unit = context.cursor_unit_id() if context is not None else None
    candidates = [
        u for u in snapshot.doc_units
        if u.unit_id != cursor_unit
        and (restrict_files is None or u.file in restrict_files)
    ]
    if not candidates:
        return RetrievalResult(items=(), query_digest="", n_candidates=0)

    q = compose_query(snapshot, context, input_text, user_query)
    probs = score(H, q, [u.embedding for u in candidates])
    order = sorted(range(len(candidates)), key=lambda i: (-probs[i], candidates[i].unit_id))
    items = tuple((candidates[i], float(probs[i])) for i in order[:K])

    digest = hashlib.sha256()
    digest.update(input_text.encode("utf-8"))
    digest.update(b"\x00")
    digest.update((user_query or "").encode("utf-8"))
    digest.update(b"\x00")
    if context is not None:
        digest.update(context.aggregate.astype("<f8").tobytes())
    return RetrievalResult(
        items=items, query_digest=digest.hexdigest()[:16], n_candidates=len(candidates)
    )


def _vector_of(v) -> np.ndarray:
    values = getattr(v, "values", v)
    return np.asarray(values, dtype=np.float64)


# ---------------------------------------------------------------------------
# learned-parameter file (written by training, read here)


@dataclass(frozen=True)
class LearnedParams:
    H: HeuristicMatrix
    eta: np.ndarray
    theta: tuple[str, ...]
    metadata: dict

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=np.float64)
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)


def default_params(d_emb: int, theta: tuple[str, ...]) -> LearnedParams:
    return LearnedParams(
        H=HeuristicMatrix.identity(d_emb, scale=0.1),
        eta=np.full(N_SOURCES, 1.0 / N_SOURCES),
        theta=theta,
        metadata={"initialized": "default"},
    )


def save_params(params: LearnedParams, path: str | Path) -> None:
    """Atomic, versioned binary write (single publication point for H/eta/theta)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = bytearray()
    out += _PARAMS_MAGIC
    out += struct.pack("<I", _PARAMS_VERSION)
    d = params.H.dim
    out += struct.pack("<II", d, len(params.eta))
    out += params.H.values.astype("<f8").tobytes()  # row-major
    out += np.asarray(params.eta, dtype="<f8").tobytes()
    theta_blob = json.dumps(list(params.theta)).encode("utf-8")
    out += struct.pack("<I", len(theta_blob))
    out += theta_blob
    meta_blob = json.dumps(params.metadata, sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(meta_blob))
    out += meta_blob
    with FileLock(str(path) + ".lock"):
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(bytes(out))
        os.replace(tmp, path)


def load_params(path: str | Path) -> LearnedParams:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"parameter file not found: {path}")
    blob = path.read_bytes()
    if blob[:8] != _PARAMS_MAGIC:
        raise ConfigError(f"{path} is not a parameter file")
    version = struct.unpack_from("<I", blob, 8)[0]
    if version != _PARAMS_VERSION:
        raise ConfigError(f"unsupported parameter file version {version}")
    d, n_eta = struct.unpack_from("<II", blob, 12)
    off = 20
    H = np.frombuffer(blob, dtype="<f8", count=d * d, offset=off).reshape(d, d)
    off += 8 * d * d
    eta = np.frombuffer(blob, dtype="<f8", count=n_eta, offset=off).copy()
    off += 8 * n_eta
    (tlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    theta = tuple(json.loads(blob[off : off + tlen].decode("utf-8")))
    off += tlen
    (mlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    metadata = json.loads(blob[off : off + mlen].decode("utf-8"))
    return LearnedParams(H=HeuristicMatrix(H.copy()), eta=eta, theta=theta, metadata=metadata)
