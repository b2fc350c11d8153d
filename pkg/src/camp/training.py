"""Learning the retrieval parameters and the prompt component ordering.

The retriever objective is the mean negative log-likelihood of each
example's positive doc unit under the bilinear softmax, plus a nuclear-norm
penalty on the heuristic matrix handled proximally (singular-value
soft-thresholding). Optimization alternates accelerated proximal-gradient
updates for the matrix and for the context weights: extrapolate with the
momentum sequence t_{n+1} = (1 + sqrt(1 + 4 t_n^2)) / 2, take a gradient
step, apply the proximal map (SVT for the matrix, Euclidean simplex
projection for the weights), then mix back with relaxation factors. Step
sizes self-tune by halving until the objective does not increase.

The component ordering is learned separately: evaluate one baseline
arrangement plus every pairwise swap, add a precedence edge whenever a swap
changes the loss by more than epsilon, and topologically sort; unordered
kinds keep their default relative order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import context as ctx_mod
from . import index as index_mod
from .context import EnvironmentState
from .errors import ConfigError, OrderingCycleError, TrainingDivergedError
from .index import IndexSnapshot
from .retrieval import FusionWeights, HeuristicMatrix

DEFAULT_ORDERING_EPSILON = 1e-3
DEFAULT_ORDERING_CAP = 8


@dataclass(frozen=True)
class TrainingExample:
    input_text: str
    environment: EnvironmentState
    positive_doc: str                 # doc unit id that should rank first
    snapshot_ref: str | None = None   # content hash of the snapshot it was built on


@dataclass
class TrainConfig:
    max_iters: int = 200
    tol: float = 1e-7
    step_h: float = 1.0        # initial gradient step for the matrix (1/tau_H)
    step_eta: float = 0.5      # initial gradient step for the weights (1/tau_eta)
    alpha: float = 1.0         # relaxation for the matrix update
    beta: float = 1.0          # relaxation for the weight update
    nuclear_reg: float = 0.01  # lambda in lambda * ||H||_*
    backtrack_max: int = 40
    fusion: FusionWeights = field(default_factory=FusionWeights)

    def validate(self) -> None:
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if not (0 < self.alpha <= 1 and 0 < self.beta <= 1):
            raise ConfigError("relaxation factors must be in (0, 1]")
        if self.step_h <= 0 or self.step_eta <= 0:
            raise ConfigError("step sizes must be positive")
        if self.nuclear_reg < 0:
            raise ConfigError("nuclear_reg must be >= 0")


@dataclass
class TrainerState:
    H_prev: np.ndarray
    H_curr: np.ndarray
    eta_prev: np.ndarray
    eta_curr: np.ndarray
    t_prev: float
    t_curr: float
    step_h: float
    step_eta: float
    alpha: float
    beta: float
    iteration: int
    loss_history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class IterRecord:
    iteration: int
    loss: float
    nuclear_norm: float
    step_h: float
    step_eta: float


@dataclass
class TrainResult:
    H: HeuristicMatrix
    eta: np.ndarray
    history: list[IterRecord]
    state: TrainerState
    converged: bool


# ---------------------------------------------------------------------------
# loss and gradients


@dataclass
class _PreparedExample:
    e_in: np.ndarray | None        # input embedding or None
    F: np.ndarray                  # (n_sources, d) signal features, zero rows absent
    has_context: bool
    cand_idx: np.ndarray           # candidate unit indices into the unit matrix
    pos: int                       # positive's position within cand_idx


@dataclass
class _Prepared:
    units: np.ndarray              # (n_units, d)
    examples: list[_PreparedExample]
    fusion: FusionWeights


def _prepare(
    batch: Sequence[TrainingExample],
    snapshot: IndexSnapshot,
    fusion: FusionWeights,
) -> _Prepared:
    if not batch:
        raise ValueError("batch must be non-empty")
    unit_ids = [u.unit_id for u in snapshot.doc_units]
    unit_pos = {uid: i for i, uid in enumerate(unit_ids)}
    missing = sorted({ex.positive_doc for ex in batch if ex.positive_doc not in unit_pos})
    if missing:
        raise ConfigError(f"training examples reference missing doc units: {missing}")

    units = np.stack([u.embedding.values for u in snapshot.doc_units])
    examples = []
    for ex in batch:
        e_in = None
        if ex.input_text.strip():
            e_in = index_mod.embed(snapshot, ex.input_text).values
        F = ctx_mod.signal_features(ex.environment, snapshot)

        cursor_unit = None
        if ex.environment.cursor is not None:
            u = index_mod.unit_containing(
                snapshot, ex.environment.cursor.file,
                ex.environment.cursor.line, ex.environment.cursor.col,
            )
            cursor_unit = u.unit_id if u is not None else None
        if cursor_unit == ex.positive_doc:
            raise ConfigError(
                f"positive doc {ex.positive_doc!r} is the cursor's own unit (excluded)"
            )
        cand = [i for i, uid in enumerate(unit_ids) if uid != cursor_unit]
        examples.append(
            _PreparedExample(
                e_in=e_in,
                F=F,
                has_context=bool(np.any(F)) and fusion.context > 0,
                cand_idx=np.asarray(cand, dtype=np.intp),
                pos=cand.index(unit_pos[ex.positive_doc]),
            )
        )
    return _Prepared(units=units, examples=examples, fusion=fusion)


def _evaluate(
    prep: _Prepared, H: np.ndarray, eta: np.ndarray, need_grads: bool
) -> tuple[float, np.ndarray | None, np.ndarray | None]:
    """Mean negative log-likelihood of the positives, with exact gradients.

    The query is q = u / ||u|| with u a fixed convex combination of the
    input embedding and the raw context mix sum_i eta_i f_i, so the loss is
    smooth in both H and eta and finite differences can check the gradients.
    """
    d = H.shape[0]
    n = len(prep.examples)
    total = 0.0
    gH = np.zeros_like(H) if need_grads else None
    geta = np.zeros(eta.shape[0]) if need_grads else None

    for ex in prep.examples:
        w_in = prep.fusion.input_text if ex.e_in is not None else 0.0
        w_ctx = prep.fusion.context if ex.has_context else 0.0
        wsum = w_in + w_ctx
        if wsum <= 0:
            raise ConfigError("training example has neither input text nor context")
        w_in, w_ctx = w_in / wsum, w_ctx / wsum

        u = np.zeros(d)
        if ex.e_in is not None:
            u += w_in * ex.e_in
        if ex.has_context:
            u += w_ctx * (eta @ ex.F)
        nu = float(np.linalg.norm(u))
        if nu < 1e-300:
            raise TrainingDivergedError("query vector collapsed to zero during training")
        q = u / nu

        C = prep.units[ex.cand_idx]
        s = C @ (H @ q)
        s = s - s.max()
        expd = np.exp(s)
        Z = expd.sum()
        p = expd / Z
        total += -(s[ex.pos] - math.log(Z))

        if need_grads:
            a = C.T @ p - C[ex.pos]
            gH += np.outer(a, q)
            if ex.has_context:
                gq = H.T @ a
                gu = (gq - q * float(q @ gq)) / nu
                geta += w_ctx * (ex.F @ gu)

    total /= n
    if need_grads:
        gH /= n
        geta /= n
    return total, gH, geta


def loss_and_grads(
    H: HeuristicMatrix | np.ndarray,
    eta,
    batch: Sequence[TrainingExample],
    snapshot: IndexSnapshot,
    fusion: FusionWeights = FusionWeights(),
) -> tuple[float, np.ndarray, np.ndarray]:
    """Data-term loss and its exact gradients (regularization is proximal)."""
    Hv = H.values if isinstance(H, HeuristicMatrix) else np.asarray(H, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    prep = _prepare(batch, snapshot, fusion)
    loss, gH, geta = _evaluate(prep, Hv, eta, need_grads=True)
    return loss, gH, geta


def data_loss(
    H: HeuristicMatrix | np.ndarray,
    eta,
    batch: Sequence[TrainingExample],
    snapshot: IndexSnapshot,
    fusion: FusionWeights = FusionWeights(),
) -> float:
    Hv = H.values if isinstance(H, HeuristicMatrix) else np.asarray(H, dtype=np.float64)
    prep = _prepare(batch, snapshot, fusion)
    return _evaluate(prep, Hv, np.asarray(eta, dtype=np.float64), need_grads=False)[0]


# ---------------------------------------------------------------------------
# proximal operators


def svt(M: np.ndarray, tau: float) -> np.ndarray:
    """Singular-value soft-thresholding: shrink each singular value by tau."""
    M = np.asarray(M, dtype=np.float64)
    if not np.all(np.isfinite(M)):
        raise ValueError("svt input contains non-finite entries")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    shrunk = np.maximum(s - tau, 0.0)
    return (U * shrunk) @ Vt


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w : w >= 0, sum w = 1}."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.shape[0] + 1)
    cond = u - css / idx > 0
    rho = int(idx[cond][-1])
    theta = css[cond][-1] / rho
    return np.maximum(v - theta, 0.0)


# ---------------------------------------------------------------------------
# retriever training loop


def train_retrievers(
    data: Sequence[TrainingExample],
    snapshot: IndexSnapshot,
    config: TrainConfig | None = None,
    H0: np.ndarray | None = None,
    eta0: np.ndarray | None = None,
) -> TrainResult:
    config = config or TrainConfig()
    config.validate()
    if len(data) < 2:
        raise ConfigError("need at least 2 training examples")

    d = snapshot.config.d_emb
    prep = _prepare(data, snapshot, config.fusion)
    H = np.eye(d) * 0.1 if H0 is None else np.asarray(H0, dtype=np.float64).copy()
    eta = (
        np.full(ctx_mod.N_SOURCES, 1.0 / ctx_mod.N_SOURCES)
        if eta0 is None
        else project_to_simplex(np.asarray(eta0, dtype=np.float64))
    )

    state = TrainerState(
        H_prev=H.copy(), H_curr=H, eta_prev=eta.copy(), eta_curr=eta,
        t_prev=1.0, t_curr=1.0, step_h=config.step_h, step_eta=config.step_eta,
        alpha=config.alpha, beta=config.beta, iteration=0,
    )

    def objective(Hv: np.ndarray, etav: np.ndarray) -> tuple[float, float]:
        f = _evaluate(prep, Hv, etav, need_grads=False)[0]
        nuc = float(np.linalg.svd(Hv, compute_uv=False).sum())
        return f, nuc

    loss, nuc = objective(H, eta)
    history = [IterRecord(0, loss, nuc, state.step_h, state.step_eta)]
    state.loss_history.append(loss)
    last_loss = loss
    converged = False

    for n in range(1, config.max_iters + 1):
        state.iteration = n
        mom = (state.t_prev - 1.0) / state.t_curr

        # heuristic-matrix update: extrapolate, gradient step, SVT, relax
        Hbar = state.H_curr + mom * (state.H_curr - state.H_prev)
        _, gH, _ = _evaluate(prep, Hbar, state.eta_curr, need_grads=True)
        f_ref, nuc_ref = objective(state.H_curr, state.eta_curr)
        obj_ref = f_ref + config.nuclear_reg * nuc_ref
        step = state.step_h
        H_next = state.H_curr
        for _ in range(config.backtrack_max):
            prox = svt(Hbar - step * gH, step * config.nuclear_reg)
            cand = state.H_curr + config.alpha * (prox - state.H_curr)
            f_cand, nuc_cand = objective(cand, state.eta_curr)
            if f_cand + config.nuclear_reg * nuc_cand <= obj_ref + 1e-12:
                H_next = cand
                break
            step *= 0.5
        state.step_h = min(step * 2.0, config.step_h)
        state.H_prev, state.H_curr = state.H_curr, H_next

        # context-weight update: extrapolate, gradient step, simplex projection, relax
        etabar = state.eta_curr + mom * (state.eta_curr - state.eta_prev)
        _, _, geta = _evaluate(prep, state.H_curr, etabar, need_grads=True)
        f_ref = _evaluate(prep, state.H_curr, state.eta_curr, need_grads=False)[0]
        step = state.step_eta
        eta_next = state.eta_curr
        for _ in range(config.backtrack_max):
            prox = project_to_simplex(etabar - step * geta)
            cand = state.eta_curr + config.beta * (prox - state.eta_curr)
            if _evaluate(prep, state.H_curr, cand, need_grads=False)[0] <= f_ref + 1e-12:
                eta_next = cand
                break
            step *= 0.5
        state.step_eta = min(step * 2.0, config.step_eta)
        state.eta_prev, state.eta_curr = state.eta_curr, eta_next

        state.t_prev, state.t_curr = (
            state.t_curr,
            (1.0 + math.sqrt(1.0 + 4.0 * state.t_curr**2)) / 2.0,
        )

        loss, nuc = objective(state.H_curr, state.eta_curr)
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                "non-finite training loss",
                state_dump={
                    "iteration": n,
                    "loss": loss,
                    "H_norm": float(np.linalg.norm(state.H_curr)),
                    "eta": state.eta_curr.tolist(),
                    "step_h": state.step_h,
                    "step_eta": state.step_eta,
                },
            )
        history.append(IterRecord(n, loss, nuc, state.step_h, state.step_eta))
        state.loss_history.append(loss)
        if abs(last_loss - loss) < config.tol:
            converged = True
            break
        last_loss = loss

    return TrainResult(
        H=HeuristicMatrix(state.H_curr),
        eta=state.eta_curr.copy(),
        history=history,
        state=state,
        converged=converged,
    )


def export_loss_csv(history: Sequence[IterRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "nuclear_norm", "step_h", "step_eta"])
        for rec in history:
            writer.writerow(
                [rec.iteration, repr(rec.loss), repr(rec.nuclear_norm),
                 repr(rec.step_h), repr(rec.step_eta)]
            )


# ---------------------------------------------------------------------------
# prompt-ordering training


def train_ordering(
    kinds: Sequence[str],
    eval_loss: Callable[[tuple[str, ...]], float],
    epsilon: float = DEFAULT_ORDERING_EPSILON,
    cap: int = DEFAULT_ORDERING_CAP,
) -> tuple[str, ...]:
    """Learn a component order from pairwise swap tests.

    Evaluates the baseline arrangement once plus exactly C(k, 2) swapped
    arrangements. An edge a -> b is added when placing a before b beats the
    swap by more than epsilon; the final order is a topological sort with
    unconstrained kinds keeping their given relative order.
    """
    base = list(kinds)
    k = len(base)
    if k < 2:
        raise ValueError("need at least 2 component kinds")
    if k > cap:
        raise ValueError(f"at most {cap} component kinds supported")
    if len(set(base)) != k:
        raise ValueError("component kinds must be unique")

    loss_base = float(eval_loss(tuple(base)))
    edges: dict[str, set[str]] = {kind: set() for kind in base}
    for i in range(k):
        for j in range(i + 1, k):
            swapped = base.copy()
            swapped[i], swapped[j] = swapped[j], swapped[i]
            loss_swap = float(eval_loss(tuple(swapped)))
            first, second = base[i], base[j]
            if loss_swap - loss_base > epsilon:
                edges[first].add(second)       # keeping first..second is better
            elif loss_base - loss_swap > epsilon:
                edges[second].add(first)       # swapping was better
    return _stable_toposort(base, edges)


def _stable_toposort(base: list[str], edges: dict[str, set[str]]) -> tuple[str, ...]:
    rank = {kind: i for i, kind in enumerate(base)}
    indegree = {kind: 0 for kind in base}
    for src, dsts in edges.items():
        for dst in dsts:
            indegree[dst] += 1

    ready = sorted([k for k in base if indegree[k] == 0], key=rank.__getitem__)
    out: list[str] = []
    while ready:
        node = ready.pop(0)
        out.append(node)
        newly = []
        for dst in edges[node]:
            indegree[dst] -= 1
            if indegree[dst] == 0:
                newly.append(dst)
        ready = sorted(ready + newly, key=rank.__getitem__)

    if len(out) != len(base):
        remaining = [k for k in base if k not in out]
        raise OrderingCycleError(_find_cycle(remaining, edges))
    return tuple(out)


def _find_cycle(nodes: list[str], edges: dict[str, set[str]]) -> list[str]:
    remaining = set(nodes)
    start = nodes[0]
    path: list[str] = []
    seen: set[str] = set()
    node = start
    while node not in seen:
        seen.add(node)
        path.append(node)
        nexts = [d for d in sorted(edges[node]) if d in remaining]
        if not nexts:
            return path  # defensive: stalled without a closed walk
        node = nexts[0]
    return path[path.index(node):]
