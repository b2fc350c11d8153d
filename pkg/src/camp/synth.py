"""Synthetic corpora: a planted-optimum retrieval benchmark for training,
and a three-level needle-task suite for end-to-end evaluation.

The evaluation suite pairs every task with a needle symbol that occurs in
exactly one doc unit of the fixture repository. ``keyed`` tasks mention a
unique key token from that unit, so any retriever can find it from the
query alone; ``contextual`` tasks use only topic words shared with several
distractor units, so the needle unit is only reachable through the cursor's
dependency context and the learned parameters. This separation is what
drives the directional gaps between the model configurations.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import index as index_mod
from .context import CursorPosition, EnvironmentState
from .index import IndexConfig, IndexSnapshot
from .llm import MockRules
from .training import TrainingExample

_SYLLABLES = (
    "ra ve lo mi tan dor fex gul hab jin kor lum nar pex qua rit sol tev "
    "ulm wex yor zan bri cru dal eph fos gim hul ixa jev kyl"
).split()


def _word(rng: random.Random, syllables: int = 3) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(syllables))


def _unique_words(rng: random.Random, count: int, syllables: int = 3) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    while len(out) < count:
        w = _word(rng, syllables)
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


# ---------------------------------------------------------------------------
# planted-optimum retrieval benchmark


@dataclass
class PlantedBenchmark:
    snapshot: IndexSnapshot
    examples: list[TrainingExample]
    H_star: np.ndarray
    doc_words: list[list[str]]


def make_planted_benchmark(
    d_emb: int = 8,
    n_docs: int = 50,
    n_examples: int = 200,
    seed: int = 7,
    words_per_doc: int = 6,
    words_per_query: int = 4,
    funcs_per_file: int = 10,
) -> PlantedBenchmark:
    """Corpus whose positives are, by construction, the argmax under a
    hidden heuristic matrix H*; training should recover a ranking-equivalent
    matrix. Queries are built from doc vocabulary so they carry signal."""
    rng = random.Random(seed)
    nprng = np.random.default_rng(seed)

    all_words = _unique_words(rng, n_docs * words_per_doc)
    doc_words = [
        all_words[i * words_per_doc : (i + 1) * words_per_doc] for i in range(n_docs)
    ]

    files: dict[str, str] = {}
    n_files = math.ceil(n_docs / funcs_per_file)
    for f in range(n_files):
        lines: list[str] = []
        for i in range(f * funcs_per_file, min((f + 1) * funcs_per_file, n_docs)):
            w = doc_words[i]
            lines += [
                f"def unit_{i:03d}():",
                f"    {w[0]} = {w[1]}({w[2]})",
                f"    {w[3]} = {w[4]} + {w[5]}",
                f"    return {w[0]}",
                "",
            ]
        files[f"bank_{f}.py"] = "\n".join(lines)

    config = IndexConfig(extensions=(".py",), profiles=((".py", "python"),), d_emb=d_emb)
    snapshot = index_mod.build_index_from_texts(files, config)
    if len(snapshot.doc_units) != n_docs:
        raise AssertionError(
            f"generator expected {n_docs} doc units, indexed {len(snapshot.doc_units)}"
        )

    units = np.stack([u.embedding.values for u in snapshot.doc_units])
    H_star = nprng.standard_normal((d_emb, d_emb))

    env = EnvironmentState(repo_root="bench://planted")
    examples = []
    for _ in range(n_examples):
        words = rng.sample(all_words, words_per_query)
        text = " ".join(words)
        q = index_mod.embed(snapshot, text).values
        scores = units @ (H_star @ q)
        positive = snapshot.doc_units[int(np.argmax(scores))].unit_id
        examples.append(
            TrainingExample(
                input_text=text,
                environment=env,
                positive_doc=positive,
                snapshot_ref=snapshot.content_hash,
            )
        )
    return PlantedBenchmark(
        snapshot=snapshot, examples=examples, H_star=H_star, doc_words=doc_words
    )


def top1_accuracy(
    snapshot: IndexSnapshot,
    examples: list[TrainingExample],
    H,
    eta,
    fusion,
) -> float:
    """Fraction of examples whose positive unit ranks first under (H, eta)."""
    from . import context as ctx_mod
    from .retrieval import HeuristicMatrix

    Hv = H.values if isinstance(H, HeuristicMatrix) else np.asarray(H)
    units = np.stack([u.embedding.values for u in snapshot.doc_units])
    ids = [u.unit_id for u in snapshot.doc_units]
    hits = 0
    for ex in examples:
        w_in = fusion.input_text if ex.input_text.strip() else 0.0
        w_ctx = fusion.context
        F = ctx_mod.signal_features(ex.environment, snapshot)
        if not np.any(F):
            w_ctx = 0.0
        total = w_in + w_ctx
        u = np.zeros(snapshot.config.d_emb)
        if w_in > 0:
            u += (w_in / total) * index_mod.embed(snapshot, ex.input_text).values
        if w_ctx > 0:
            u += (w_ctx / total) * (np.asarray(eta) @ F)
        q = u / np.linalg.norm(u)
        scores = units @ (Hv @ q)
        if ids[int(np.argmax(scores))] == ex.positive_doc:
            hits += 1
    return hits / len(examples)


# ---------------------------------------------------------------------------
# evaluation suite


@dataclass
class EvalSuite:
    root: Path
    manifest: Path
    mock_rules: Path
    training_data: Path
    fixture: Path


def make_eval_suite(
    out_dir: str | Path,
    tasks_per_level: int = 30,
    seed: int = 0,
    base_rate: float = 0.05,
    keyed_fraction: float = 0.4,
    distractors_per_family: int = 6,
    training_examples_per_task: int = 3,
) -> EvalSuite:
    """One fixture repository carrying tasks at all three runnable levels,
    plus the mock rule set and a training split of resampled queries over
    the same repository (the engine's parameters are per-codebase)."""
    out = Path(out_dir)
    fix = out / "fixtures" / "suite_repo"
    fix.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    fixture_rel = "fixtures/suite_repo"

    manifest_lines: list[dict] = []
    rules = MockRules(seed=seed, default_base_rate=base_rate)
    training_lines: list[dict] = []

    _gen_class_level(fix, fixture_rel, rng, tasks_per_level, base_rate, manifest_lines, rules)
    _gen_file_level(
        fix, fixture_rel, rng, tasks_per_level, base_rate, keyed_fraction,
        training_examples_per_task, manifest_lines, rules, training_lines,
    )
    _gen_project_level(
        fix, fixture_rel, rng, tasks_per_level, base_rate, keyed_fraction,
        distractors_per_family, training_examples_per_task,
        manifest_lines, rules, training_lines,
    )

    manifest = out / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for line in manifest_lines:
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    rules_path = out / "mock_rules.json"
    rules_path.write_text(json.dumps(rules.to_dict(), indent=2, sort_keys=True) + "\n")
    training_path = out / "training.jsonl"
    with open(training_path, "w", encoding="utf-8") as fh:
        for line in training_lines:
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    return EvalSuite(
        root=out,
        manifest=manifest,
        mock_rules=rules_path,
        training_data=training_path,
        fixture=fix,
    )


def _needle(rng: random.Random, level: str, t: int) -> str:
    return f"{level}_needle_{t:03d}_{_word(rng, 2)}"


def _gen_class_level(fix, fixture_rel, rng, n_tasks, base_rate, manifest, rules) -> None:
    """Needle lives inside the cursor's own class; local context carries it."""
    group_size = 5
    n_groups = math.ceil(n_tasks / group_size)
    for g in range(n_groups):
        tasks = range(g * group_size, min((g + 1) * group_size, n_tasks))
        lines = [f'"""Workspace module {g}."""', "", f"class Workspace{g}:"]
        lines.append("    def prepare(self):")
        cursor_line = len(lines)
        lines.append(f"        buffers = {_word(rng)}_{_word(rng, 2)}")
        lines.append("        return buffers")
        needles = {}
        for t in tasks:
            needle = _needle(rng, "class", t)
            needles[t] = needle
            lines += [
                "",
                f"    def task_{t:03d}(self):",
                f"        handle = {needle}",
                "        return handle",
            ]
        fname = f"space_{g}.py"
        (fix / fname).write_text("\n".join(lines) + "\n", encoding="utf-8")
        for t in tasks:
            task_id = f"class-{t:03d}"
            topic = " ".join(_unique_words(rng, 2))
            manifest.append(
                {
                    "task_id": task_id,
                    "level": "class_runnable",
                    "repo_fixture": fixture_rel,
                    "environment": {
                        "cursor": {"file": fname, "line": cursor_line, "col": 8}
                    },
                    "query": f"Complete the {topic} workflow inside Workspace{g}",
                    "verifier": {"kind": "needle_match", "needle": needles[t]},
                }
            )
            rules.tasks[task_id] = _rule(needles[t], base_rate)


def _gen_file_level(
    fix, fixture_rel, rng, n_tasks, base_rate, keyed_fraction,
    train_per_task, manifest, rules, training_lines,
) -> None:
    """Needle lives in another top-level unit of the cursor's file."""
    group_size = 5
    n_groups = math.ceil(n_tasks / group_size)
    for g in range(n_groups):
        tasks = list(range(g * group_size, min((g + 1) * group_size, n_tasks)))
        info = {}
        for t in tasks:
            info[t] = {
                "needle": _needle(rng, "file", t),
                "key": f"fkey_{t:03d}_{_word(rng, 2)}",
                "topic": _unique_words(rng, 2),
                "util": f"util_{t:03d}",
                "keyed": rng.random() < keyed_fraction,
            }
        lines = [f'"""Editor module {g}."""', "", f"class Editor{g}:"]
        lines.append("    def active_task(self):")
        cursor_line = len(lines)
        for t in tasks:
            lines.append(f"        part_{t:03d} = {info[t]['util']}()")
        lines.append("        return None")
        for t in tasks:
            d = info[t]
            lines += [
                "",
                "",
                f"def {d['util']}():",
                f"    payload = {d['needle']}",
                f"    label = {d['key']}",
                f"    draft = {d['topic'][0]}({d['topic'][1]})",
                "    return payload",
            ]
        fname = f"editor_{g}.py"
        (fix / fname).write_text("\n".join(lines) + "\n", encoding="utf-8")
        for t in tasks:
            d = info[t]
            task_id = f"file-{t:03d}"
            if d["keyed"]:
                query = f"Wire the {d['key']} helper into the editor flow"
            else:
                query = f"Extend the {d['topic'][0]} {d['topic'][1]} support in this editor"
            manifest.append(
                {
                    "task_id": task_id,
                    "level": "file_runnable",
                    "repo_fixture": fixture_rel,
                    "environment": {
                        "cursor": {"file": fname, "line": cursor_line, "col": 8}
                    },
                    "query": query,
                    "verifier": {"kind": "needle_match", "needle": d["needle"]},
                }
            )
            rules.tasks[task_id] = _rule(d["needle"], base_rate)
            for _ in range(train_per_task):
                filler = _word(rng)
                if d["keyed"]:
                    text = f"hook the {d['key']} helper beside {filler}"
                else:
                    text = f"adjust the {d['topic'][0]} {d['topic'][1]} support near {filler}"
                training_lines.append(
                    {
                        "input_text": text,
                        "cursor": {"file": fname, "line": cursor_line, "col": 8},
                        "positive_needle": d["needle"],
                    }
                )


def _gen_project_level(
    fix, fixture_rel, rng, n_tasks, base_rate, keyed_fraction,
    distractors_per_family, train_per_task, manifest, rules, training_lines,
) -> None:
    """Needle lives in a different file; only the cursor's dependency context
    (and the learned parameters) separate it from same-topic distractors."""
    group_size = 10
    n_groups = math.ceil(n_tasks / group_size)
    n_libs = 4

    info = {}
    n_families = max(4, n_tasks // 3)
    families = [_unique_words(rng, 3) for _ in range(n_families)]
    for t in range(n_tasks):
        info[t] = {
            "needle": _needle(rng, "project", t),
            "key": f"pkey_{t:03d}_{_word(rng, 2)}",
            "bridge": f"stage_{t:03d}_{_word(rng, 2)}",
            "family": t % n_families,
            "keyed": rng.random() < keyed_fraction,
            "group": t // group_size,
        }

    # cursor file: one work function per task group, calling each bridge
    lines = ['"""Workbench for the current milestones."""', ""]
    cursor_lines = {}
    for g in range(n_groups):
        lines.append(f"def compose_area_{g}():")
        cursor_lines[g] = len(lines)
        for t in range(g * group_size, min((g + 1) * group_size, n_tasks)):
            lines.append(f"    plan_{t:03d} = {info[t]['bridge']}()")
        lines.append("    return None")
        lines.append("")
    (fix / "workbench.py").write_text("\n".join(lines) + "\n", encoding="utf-8")

    # lib files: one unit per task holding bridge + needle + key + topic words
    lib_lines: dict[int, list[str]] = {i: [f'"""Library {i}."""', ""] for i in range(n_libs)}
    for t in range(n_tasks):
        d = info[t]
        fam = families[d["family"]]
        lib = lib_lines[t % n_libs]
        lib += [
            f"def {d['bridge']}():",
            f"    payload = {d['needle']}",
            f"    label = {d['key']}",
            f"    draft = {fam[0]}({fam[1]}, {fam[2]})",
            "    return payload",
            "",
        ]
    for i, content in lib_lines.items():
        (fix / f"lib_{i}.py").write_text("\n".join(content) + "\n", encoding="utf-8")

    # distractor units: same topic triples, tighter token bags so they win
    # plain cosine retrieval against the (more diluted) needle units
    d_lines = ['"""Scratch notes."""', ""]
    j = 0
    for fam_idx, fam in enumerate(families):
        for _ in range(distractors_per_family):
            d_lines += [
                f"def scratch_{fam_idx:02d}_{j:03d}():",
                f"    draft = {fam[0]}({fam[1]}, {fam[2]})",
                "    return draft",
                "",
            ]
            j += 1
    (fix / "notes.py").write_text("\n".join(d_lines) + "\n", encoding="utf-8")

    for t in range(n_tasks):
        d = info[t]
        fam = families[d["family"]]
        task_id = f"project-{t:03d}"
        fname = "workbench.py"
        if d["keyed"]:
            query = f"Integrate the {d['key']} routine into the pipeline"
        else:
            query = f"Improve the {fam[0]} {fam[1]} {fam[2]} flow for the current stage"
        manifest.append(
            {
                "task_id": task_id,
                "level": "project_runnable",
                "repo_fixture": fixture_rel,
                "environment": {
                    "cursor": {"file": fname, "line": cursor_lines[d["group"]], "col": 4}
                },
                "query": query,
                "verifier": {"kind": "needle_match", "needle": d["needle"]},
            }
        )
        rules.tasks[task_id] = _rule(d["needle"], base_rate)

        for _ in range(train_per_task):
            fillers = _unique_words(rng, 2)
            if d["keyed"]:
                text = f"connect the {d['key']} routine with {fillers[0]}"
            else:
                text = f"rework the {fam[0]} {fam[1]} {fam[2]} path near {fillers[0]}"
            training_lines.append(
                {
                    "input_text": text,
                    "cursor": {"file": fname, "line": cursor_lines[d["group"]], "col": 4},
                    "positive_needle": d["needle"],
                }
            )


def _rule(needle: str, base_rate: float):
    from .llm import MockRule

    return MockRule(needle=needle, base_rate=base_rate)


def load_training_data(
    path: str | Path, snapshot: IndexSnapshot, repo_root: str
) -> list[TrainingExample]:
    """Read training examples from JSONL; positives may be given as unit ids
    or as needles resolved against the snapshot's unit texts."""
    needle_to_unit = {}
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            cursor = None
            if data.get("cursor"):
                c = data["cursor"]
                cursor = CursorPosition(file=c["file"], line=int(c["line"]), col=int(c.get("col", 0)))
            env = EnvironmentState(
                repo_root=str(repo_root),
                cursor=cursor,
                artifacts=tuple(data["artifacts"]) if data.get("artifacts") else None,
            )
            if "positive_doc" in data:
                positive = data["positive_doc"]
            else:
                needle = data["positive_needle"]
                if needle not in needle_to_unit:
                    hits = [u.unit_id for u in snapshot.doc_units if needle in u.text]
                    if len(hits) != 1:
                        raise ValueError(
                            f"needle {needle!r} matches {len(hits)} units, expected 1"
                        )
                    needle_to_unit[needle] = hits[0]
                positive = needle_to_unit[needle]
            examples.append(
                TrainingExample(
                    input_text=data["input_text"],
                    environment=env,
                    positive_doc=positive,
                    snapshot_ref=snapshot.content_hash,
                )
            )
    return examples


# ---------------------------------------------------------------------------
# small demo repository


def make_toy_repo(out_dir: str | Path) -> Path:
    """Three-file repository used by CLI examples and tests."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "geometry.py").write_text(
        '"""Geometry helpers."""\n\n'
        "def surface_gauge(width, height):\n"
        "    # trapezoid shortcut\n"
        "    return width * height / 2\n\n"
        "def frame_ratio(width, height):\n"
        "    return width / height\n",
        encoding="utf-8",
    )
    (out / "panels.py").write_text(
        '"""Panel assembly."""\n\n'
        "from geometry import surface_gauge\n\n"
        "class PanelKit:\n"
        "    def quote(self, width, height):\n"
        "        area = surface_gauge(width, height)\n"
        "        return area * 12\n",
        encoding="utf-8",
    )
    (out / "report.js").write_text(
        "// rendering helpers\n"
        "function renderQuote(amount) {\n"
        "    return `total: ${amount}`;\n"
        "}\n",
        encoding="utf-8",
    )
    return out
