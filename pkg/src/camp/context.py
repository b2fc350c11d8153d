"""Contextual signal extraction and weighted aggregation.

Four fixed sources describe the local development environment: the cursor
position, the absolute repository path, cached build artifacts, and a
summary of the symbol index. Each present source yields one feature vector
in embedding space; a learned weight vector on the probability simplex
mixes them into a single context vector, with at most ``tau_c`` sources
carrying positive weight.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import embedding as emb
from . import index as index_mod
from .errors import DegenerateContextError
from .index import IndexSnapshot

logger = logging.getLogger(__name__)

SOURCE_CURSOR = "cursor_position"
SOURCE_REPO_PATH = "repo_path"
SOURCE_ARTIFACTS = "build_artifacts"
SOURCE_INDEX_INFO = "index_information"

# Fixed source set; only the weights are learned.
SOURCES = (SOURCE_CURSOR, SOURCE_REPO_PATH, SOURCE_ARTIFACTS, SOURCE_INDEX_INFO)
N_SOURCES = len(SOURCES)

DEFAULT_TAU_C = 4
INDEX_SUMMARY_TOP = 16


@dataclass(frozen=True)
class CursorPosition:
    file: str   # repo-relative
    line: int   # 0-based
    col: int


@dataclass(frozen=True)
class EnvironmentState:
    """Declarative stand-in for live IDE state, loadable from JSON."""

    repo_root: str
    cursor: CursorPosition | None = None
    artifacts: tuple[str, ...] | None = None


@dataclass(frozen=True)
class ContextSignal:
    source: str
    payload: Any
    feature: emb.EmbeddingVector


@dataclass(frozen=True)
class ContextVector:
    entries: tuple[tuple[ContextSignal, float], ...]
    aggregate: np.ndarray
    tau_c: int

    def __post_init__(self):
        self.aggregate.setflags(write=False)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.entries])

    def cursor_unit_id(self) -> str | None:
        for signal, _ in self.entries:
            if signal.source == SOURCE_CURSOR:
                return signal.payload.get("unit_id")
        return None

    def is_zero(self) -> bool:
        return not self.entries or float(np.linalg.norm(self.aggregate)) == 0.0


def environment_from_dict(data: dict) -> EnvironmentState:
    cursor = None
    if data.get("cursor"):
        c = data["cursor"]
        cursor = CursorPosition(file=c["file"], line=int(c["line"]), col=int(c.get("col", 0)))
    artifacts = tuple(data["artifacts"]) if data.get("artifacts") else None
    return EnvironmentState(repo_root=str(data["repo_root"]), cursor=cursor, artifacts=artifacts)


def load_environment(path: str | Path) -> EnvironmentState:
    with open(path, encoding="utf-8") as fh:
        return environment_from_dict(json.load(fh))


def collect_signals(env: EnvironmentState, snapshot: IndexSnapshot) -> list[ContextSignal]:
    """One signal per available source, in fixed source order."""
    d = snapshot.config.d_emb
    signals: list[ContextSignal] = []

    if env.cursor is not None:
        unit = index_mod.unit_containing(snapshot, env.cursor.file, env.cursor.line, env.cursor.col)
        if unit is None:
            logger.warning("cursor file %s not indexed; cursor signal omitted", env.cursor.file)
        else:
            signals.append(
                ContextSignal(
                    source=SOURCE_CURSOR,
                    payload={
                        "file": env.cursor.file,
                        "line": env.cursor.line,
                        "col": env.cursor.col,
                        "unit_id": unit.unit_id,
                        "unit_name": unit.name,
                        "unit_text": unit.text,
                    },
                    feature=unit.embedding,
                )
            )

    signals.append(
        ContextSignal(
            source=SOURCE_REPO_PATH,
            payload=env.repo_root,
            feature=emb.embed_text(env.repo_root, d),
        )
    )

    if env.artifacts:
        try:
            names = " ".join(Path(a).name for a in env.artifacts)
            signals.append(
                ContextSignal(
                    source=SOURCE_ARTIFACTS,
                    payload=list(env.artifacts),
                    feature=emb.embed_text(names, d),
                )
            )
        except (TypeError, ValueError) as exc:
            logger.warning("unreadable artifact metadata (%s); artifact signal omitted", exc)

    summary = index_summary(snapshot)
    if summary:
        signals.append(
            ContextSignal(
                source=SOURCE_INDEX_INFO,
                payload=summary,
                feature=emb.embed_text(" ".join(summary), d),
            )
        )
    return signals


def index_summary(snapshot: IndexSnapshot, top: int = INDEX_SUMMARY_TOP) -> list[str]:
    """Names of the highest-degree symbols in the dependency graph."""
    in_degree: dict[str, int] = {}
    for rec in snapshot.records.values():
        for dep in rec.dependencies:
            in_degree[dep] = in_degree.get(dep, 0) + 1
    name_degree: dict[str, int] = {}
    for rec in snapshot.records.values():
        if rec.kind in (index_mod.KIND_FUNCTION, index_mod.KIND_TYPE,
                        index_mod.KIND_VARIABLE, index_mod.KIND_IMPORT):
            degree = in_degree.get(rec.symbol_id, 0) + len(rec.dependencies)
            name_degree[rec.name] = name_degree.get(rec.name, 0) + degree
    ranked = sorted(name_degree.items(), key=lambda kv: (-kv[1], kv[0]))
    return [name for name, _ in ranked[:top]]


def slot_signals(
    env: EnvironmentState, snapshot: IndexSnapshot
) -> list[ContextSignal | None]:
    """Signals aligned to the fixed source order, None where absent."""
    by_source = {s.source: s for s in collect_signals(env, snapshot)}
    return [by_source.get(source) for source in SOURCES]


def signal_features(env: EnvironmentState, snapshot: IndexSnapshot) -> np.ndarray:
    """(n_sources, d_emb) matrix of per-source features, zero rows if absent."""
    rows = []
    for signal in slot_signals(env, snapshot):
        if signal is None:
            rows.append(np.zeros(snapshot.config.d_emb))
        else:
            rows.append(signal.feature.values)
    return np.stack(rows)


def aggregate(
    signals: list[ContextSignal | None],
    weights,
    tau_c: int = DEFAULT_TAU_C,
) -> ContextVector:
    """Weighted sum of signal features with simplex normalization.

    ``weights[i]`` pairs with ``signals[i]``; None entries (absent sources)
    are masked to weight zero. At most ``tau_c`` signals keep positive
    weight: the lowest-weight ones are zeroed (ties broken by source order)
    and the rest renormalized to sum to one.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) < len(signals):
        raise ValueError("weights vector shorter than signal list")
    if tau_c < 1:
        raise ValueError("tau_c must be >= 1")

    w = np.maximum(weights[: len(signals)].copy(), 0.0)
    for i, signal in enumerate(signals):
        if signal is None:
            w[i] = 0.0
    if w.sum() <= 0.0:
        raise DegenerateContextError("degenerate context weights")
    w /= w.sum()

    positive = [i for i in range(len(signals)) if w[i] > 0.0]
    if len(positive) > tau_c:
        order = sorted(positive, key=lambda i: (-w[i], _source_rank(signals[i])))
        for i in order[tau_c:]:
            w[i] = 0.0
        w /= w.sum()

    present = [(signals[i], w[i]) for i in range(len(signals)) if signals[i] is not None]
    dim = present[0][0].feature.dim
    agg = np.zeros(dim, dtype=np.float64)
    for signal, weight in present:
        if signal.feature.dim != dim:
            raise ValueError("inconsistent signal feature dimensions")
        agg += weight * signal.feature.values
    return ContextVector(entries=tuple(present), aggregate=agg, tau_c=tau_c)


def context_for(
    env: EnvironmentState,
    snapshot: IndexSnapshot,
    eta,
    tau_c: int = DEFAULT_TAU_C,
) -> ContextVector:
    """Extract and aggregate the context for an environment in one step."""
    return aggregate(slot_signals(env, snapshot), eta, tau_c)


def _source_rank(signal: ContextSignal | None) -> int:
    if signal is None:
        return len(SOURCES)
    try:
        return SOURCES.index(signal.source)
    except ValueError:
        return len(SOURCES)
