"""Benchmark harness: Pass@K over runnable-level task suites.

Tasks are grouped into three runnable levels by how far the needed context
sits from the cursor: inside the same class, elsewhere in the same file, or
in another file of the project. Each task is answered with ``n`` generated
samples; a verifier counts the correct ones; and Pass@K is the expected
probability that at least one of K drawn samples passes, averaged over
tasks.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import re
import shlex
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from . import engine as engine_mod
from . import index as index_mod
from . import prompt as prompt_mod
from .context import EnvironmentState, environment_from_dict
from .engine import EngineSettings, MODEL_CONFIGS
from .errors import CampError, GenerationError, ManifestError
from .index import IndexConfig, IndexSnapshot
from .llm import BackendConfig, GenerationRequest, generate
from .retrieval import LearnedParams, default_params

logger = logging.getLogger(__name__)

LEVEL_CLASS = "class_runnable"
LEVEL_FILE = "file_runnable"
LEVEL_PROJECT = "project_runnable"
LEVELS = (LEVEL_CLASS, LEVEL_FILE, LEVEL_PROJECT)

VERIFIER_NEEDLE = "needle_match"
VERIFIER_COMMAND = "command_exec"

INSERT_MARKER = "<<INSERT-SAMPLE>>"


@dataclass(frozen=True)
class Verifier:
    kind: str
    needle: str | None = None
    pattern: str | None = None
    command: str | None = None
    target_file: str | None = None
    timeout_s: float = 10.0

    def __post_init__(self):
        if self.kind == VERIFIER_NEEDLE:
            if not (self.needle or self.pattern):
                raise ManifestError("needle_match verifier needs a needle or pattern")
        elif self.kind == VERIFIER_COMMAND:
            if not (self.command and self.target_file):
                raise ManifestError("command_exec verifier needs command and target_file")
        else:
            raise ManifestError(f"unknown verifier kind {self.kind!r}")


@dataclass(frozen=True)
class EvalCase:
    task_id: str
    level: str
    repo_fixture: Path
    environment: EnvironmentState
    query: str
    verifier: Verifier


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    level: str
    n: int
    c: int


@dataclass
class EvalReport:
    n_samples: int
    ks: tuple[int, ...]
    seed: int
    tasks: dict[str, list[TaskResult]] = field(default_factory=dict)
    skipped: dict[str, list[str]] = field(default_factory=dict)
    runtime_s: dict[str, float] = field(default_factory=dict)  # excluded from JSON

    def models(self) -> list[str]:
        return [m for m in MODEL_CONFIGS if m in self.tasks] + sorted(
            set(self.tasks) - set(MODEL_CONFIGS)
        )

    def levels(self) -> list[str]:
        present = {t.level for results in self.tasks.values() for t in results}
        return [lv for lv in LEVELS if lv in present] + sorted(present - set(LEVELS))

    def pass_at_k(self, model: str, level: str, k: int) -> float | None:
        results = [t for t in self.tasks.get(model, []) if t.level == level]
        if not results:
            return None
        return sum(pass_at_k(t.n, t.c, k) for t in results) / len(results)

    def to_json_dict(self) -> dict:
        out: dict = {
            "schema": "camp-eval-report/1",
            "n_samples": self.n_samples,
            "ks": list(self.ks),
            "seed": self.seed,
            "results": {},
            "per_task": {},
            "skipped": {m: sorted(v) for m, v in sorted(self.skipped.items()) if v},
        }
        for model in self.models():
            out["results"][model] = {}
            for level in self.levels():
                cell = {
                    str(k): self.pass_at_k(model, level, k)
                    for k in self.ks
                    if self.pass_at_k(model, level, k) is not None
                }
                if cell:
                    out["results"][model][level] = cell
            out["per_task"][model] = [
                {"task_id": t.task_id, "level": t.level, "n": t.n, "c": t.c}
                for t in sorted(self.tasks[model], key=lambda t: t.task_id)
            ]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"


def merge_reports(reports: list[EvalReport]) -> EvalReport:
    if not reports:
        raise ValueError("nothing to merge")
    first = reports[0]
    merged = EvalReport(n_samples=first.n_samples, ks=first.ks, seed=first.seed)
    for rep in reports:
        if (rep.n_samples, rep.ks, rep.seed) != (first.n_samples, first.ks, first.seed):
            raise ValueError("cannot merge reports with different n/Ks/seed")
        merged.tasks.update(rep.tasks)
        merged.skipped.update(rep.skipped)
        merged.runtime_s.update(rep.runtime_s)
    return merged


# ---------------------------------------------------------------------------
# Pass@K


def pass_at_k(n: int, c: int, k: int) -> float:
    """Expected chance that at least one of k drawn samples is correct,
    with c of n total samples correct. Exact rational evaluation of the
    stable product form 1 - prod_{i=n-c+1..n} (1 - k/i)."""
    if not (0 <= c <= n):
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not (1 <= k <= n):
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    prod = Fraction(1)
    for i in range(n - c + 1, n + 1):
        prod *= 1 - Fraction(k, i)
    return float(1 - prod)


# ---------------------------------------------------------------------------
# verifiers


def verify(sample: str, verifier: Verifier, fixture_root: str | Path | None = None) -> bool:
    if verifier.kind == VERIFIER_NEEDLE:
        if verifier.needle is not None and verifier.needle in sample:
            return True
        if verifier.pattern is not None and re.search(verifier.pattern, sample):
            return True
        return False
    return _verify_command(sample, verifier, fixture_root)


def _verify_command(sample: str, verifier: Verifier, fixture_root) -> bool:
    if fixture_root is None:
        raise ManifestError("command_exec verifier needs the fixture root")
    fixture_root = Path(fixture_root)
    if not fixture_root.is_dir():
        raise ManifestError(f"fixture not found: {fixture_root}")
    with tempfile.TemporaryDirectory(prefix="camp-eval-") as tmp:
        workdir = Path(tmp) / "repo"
        shutil.copytree(fixture_root, workdir)
        target = workdir / verifier.target_file
        if not target.is_file():
            raise ManifestError(f"verifier target missing: {verifier.target_file}")
        lines = target.read_text(encoding="utf-8").split("\n")
        marked = [i for i, line in enumerate(lines) if INSERT_MARKER in line]
        if not marked:
            raise ManifestError(f"no {INSERT_MARKER} marker in {verifier.target_file}")
        indent = lines[marked[0]][: len(lines[marked[0]]) - len(lines[marked[0]].lstrip())]
        inserted = "\n".join(indent + l for l in sample.split("\n"))
        lines[marked[0]] = inserted
        target.write_text("\n".join(lines), encoding="utf-8")
        try:
            proc = subprocess.run(
                shlex.split(verifier.command),
                cwd=workdir,
                capture_output=True,
                timeout=verifier.timeout_s,
            )
        except subprocess.TimeoutExpired:
            return False
        return proc.returncode == 0


# ---------------------------------------------------------------------------
# manifest loading


def load_manifest(path: str | Path) -> list[EvalCase]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    cases: list[EvalCase] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                cases.append(_case_from_dict(json.loads(line), base))
            except (KeyError, ValueError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: invalid case: {exc}") from exc
    if not cases:
        raise ManifestError(f"manifest {path} contains no cases")
    return cases


def _case_from_dict(data: dict, base: Path) -> EvalCase:
    level = data["level"]
    if level not in LEVELS:
        raise ManifestError(f"unknown runnable level {level!r}")
    fixture = (base / data["repo_fixture"]).resolve()
    if not fixture.is_dir():
        raise ManifestError(f"fixture directory missing: {fixture}")
    if level == LEVEL_PROJECT:
        n_sources = sum(1 for p in fixture.rglob("*") if p.is_file())
        if n_sources < 2:
            raise ManifestError(
                f"project_runnable fixture must span >= 2 files: {fixture}"
            )
    env_data = dict(data.get("environment", {}))
    env_data["repo_root"] = str(fixture)
    v = data["verifier"]
    verifier = Verifier(
        kind=v["kind"],
        needle=v.get("needle"),
        pattern=v.get("pattern"),
        command=v.get("command"),
        target_file=v.get("target_file"),
        timeout_s=float(v.get("timeout_s", 10.0)),
    )
    return EvalCase(
        task_id=str(data["task_id"]),
        level=level,
        repo_fixture=fixture,
        environment=environment_from_dict(env_data),
        query=str(data["query"]),
        verifier=verifier,
    )


# ---------------------------------------------------------------------------
# benchmark runner


def run_config(
    model: str,
    cases: list[EvalCase],
    backend: BackendConfig,
    n: int = 10,
    ks: tuple[int, ...] = (1, 5, 10),
    params: LearnedParams | None = None,
    settings: EngineSettings | None = None,
    index_config: IndexConfig | None = None,
    seed: int = 0,
    workers: int = 4,
) -> EvalReport:
    """Evaluate one model configuration over a task suite."""
    if model not in MODEL_CONFIGS:
        raise ValueError(f"unknown model configuration {model!r}")
    if n < max(ks):
        raise ValueError(f"n={n} must be >= max(Ks)={max(ks)}")
    settings = settings or EngineSettings()
    index_config = index_config or IndexConfig()

    started = time.monotonic()
    report = EvalReport(n_samples=n, ks=tuple(ks), seed=seed)
    report.tasks[model] = []
    report.skipped[model] = []

    snapshots: dict[Path, IndexSnapshot] = {}
    runnable: list[EvalCase] = []
    for case in cases:
        if case.repo_fixture not in snapshots:
            try:
                snapshots[case.repo_fixture] = index_mod.build_index(
                    case.repo_fixture, index_config
                )
            except CampError as exc:
                snapshots[case.repo_fixture] = None  # type: ignore[assignment]
                logger.warning("fixture %s failed to index: %s", case.repo_fixture, exc)
        if snapshots[case.repo_fixture] is None:
            report.skipped[model].append(f"{case.task_id}: fixture failed to load")
        else:
            runnable.append(case)

    def eval_task(case: EvalCase) -> TaskResult:
        snapshot = snapshots[case.repo_fixture]
        model_params = params or default_params(
            snapshot.config.d_emb, prompt_mod.DEFAULT_ORDER
        )
        plan = engine_mod.build_prompt(
            model, snapshot, case.environment, case.query, model_params, settings
        )
        request = GenerationRequest(
            payload=prompt_mod.serialize(plan, prompt_mod.DIALECT_CHAT),
            n_samples=n,
            seed=seed,
        )
        try:
            samples = generate(request, backend).samples
        except GenerationError as exc:
            logger.warning("task %s: backend failure (%s); samples count as wrong",
                           case.task_id, exc)
            samples = ()
        c = sum(
            1 for s in samples if verify(s, case.verifier, case.repo_fixture)
        )
        return TaskResult(task_id=case.task_id, level=case.level, n=n, c=c)

    if workers > 1 and len(runnable) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(eval_task, case): case for case in runnable}
            for fut in concurrent.futures.as_completed(futures):
                case = futures[fut]
                try:
                    report.tasks[model].append(fut.result())
                except ManifestError as exc:
                    report.skipped[model].append(f"{case.task_id}: {exc}")
    else:
        for case in runnable:
            try:
                report.tasks[model].append(eval_task(case))
            except ManifestError as exc:
                report.skipped[model].append(f"{case.task_id}: {exc}")

    report.tasks[model].sort(key=lambda t: t.task_id)
    report.skipped[model].sort()
    report.runtime_s[model] = time.monotonic() - started
    return report
