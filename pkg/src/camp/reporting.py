"""Report rendering: aligned tables, CSV/JSON files, and figures.

The evaluation report mirrors the benchmark layout (one row per model
configuration, one column group per runnable level with Pass@1/5/10), and
can append the published CoderEval reference results for side-by-side
comparison. Every file-producing path also renders matplotlib figures next
to the delimited output.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport
from .training import IterRecord

# Published reference results (CoderEval benchmark, GPT-3.5-Turbo backend),
# shown for qualitative comparison only; absolute values are not
# reproducible with the mock backend.
REFERENCE_RESULTS = {
    "CloudOnly": {
        "class_runnable": {1: 8.73, 5: 12.57, 10: 14.55},
        "file_runnable": {1: 21.03, 5: 29.09, 10: 32.35},
        "project_runnable": {1: 9.37, 5: 12.08, 10: 13.04},
    },
    "BaseRAG": {
        "class_runnable": {1: 19.84, 5: 35.06, 10: 40.91},
        "file_runnable": {1: 24.98, 5: 35.94, 10: 39.01},
        "project_runnable": {1: 15.66, 5: 21.89, 10: 24.62},
    },
    "FileContext": {
        "class_runnable": {1: 31.23, 5: 43.41, 10: 47.30},
        "file_runnable": {1: 29.52, 5: 37.80, 10: 42.30},
        "project_runnable": {1: 11.08, 5: 16.87, 10: 17.92},
    },
    "CAMP": {
        "class_runnable": {1: 28.96, 5: 41.72, 10: 46.07},
        "file_runnable": {1: 35.30, 5: 43.45, 10: 45.80},
        "project_runnable": {1: 21.91, 5: 25.05, 10: 26.43},
    },
}


def render_table(report: EvalReport, reference: bool = False) -> str:
    """Aligned-text table: models as rows, level x Pass@K as columns."""
    levels = report.levels()
    ks = list(report.ks)
    header = ["Model"]
    for level in levels:
        for k in ks:
            header.append(f"{_level_label(level)} P@{k}")

    rows = [header]
    for model in report.models():
        row = [model]
        for level in levels:
            for k in ks:
                value = report.pass_at_k(model, level, k)
                row.append("-" if value is None else f"{100 * value:.2f}%")
        rows.append(row)

    lines = [_format_rows(rows)]
    if reference:
        ref_rows = [header]
        for model, per_level in REFERENCE_RESULTS.items():
            row = [model]
            for level in levels:
                for k in ks:
                    ref = per_level.get(level, {}).get(k)
                    row.append("-" if ref is None else f"{ref:.2f}%")
            ref_rows.append(row)
        lines.append("")
        lines.append("Reference results (CoderEval, GPT-3.5-Turbo backend):")
        lines.append(_format_rows(ref_rows))
    if report.runtime_s:
        lines.append("")
        for model in report.models():
            if model in report.runtime_s:
                lines.append(f"{model}: evaluated in {report.runtime_s[model]:.1f}s")
    return "\n".join(lines) + "\n"


def _level_label(level: str) -> str:
    return level.replace("_runnable", "")


def _format_rows(rows: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    out = []
    for r, row in enumerate(rows):
        out.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if r == 0:
            out.append("  ".join("-" * widths[i] for i in range(len(widths))))
    return "\n".join(out)


def write_report_json(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
    return path


def write_report_csv(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "level", "k", "pass_at_k", "n_tasks"])
        for model in report.models():
            for level in report.levels():
                n_tasks = sum(1 for t in report.tasks[model] if t.level == level)
                for k in report.ks:
                    value = report.pass_at_k(model, level, k)
                    if value is not None:
                        writer.writerow([model, level, k, repr(value), n_tasks])
    return path


def render_report_figures(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """One grouped-bar Pass@K figure per runnable level."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    models = report.models()
    ks = list(report.ks)
    for level in report.levels():
        fig, ax = plt.subplots(figsize=(7, 4))
        width = 0.8 / max(1, len(ks))
        for ki, k in enumerate(ks):
            values = [100 * (report.pass_at_k(m, level, k) or 0.0) for m in models]
            offsets = [i + ki * width for i in range(len(models))]
            ax.bar(offsets, values, width=width, label=f"Pass@{k}")
        ax.set_xticks([i + width * (len(ks) - 1) / 2 for i in range(len(models))])
        ax.set_xticklabels(models)
        ax.set_ylabel("Pass@K (%)")
        ax.set_ylim(0, 105)
        ax.set_title(f"{_level_label(level)}-runnable tasks")
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"pass_at_k_{_level_label(level)}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def render_loss_figure(history: Sequence[IterRecord], path: str | Path) -> Path:
    """Training curve: data loss plus the nuclear norm on a twin axis."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    iters = [rec.iteration for rec in history]
    losses = [rec.loss for rec in history]
    nucs = [rec.nuclear_norm for rec in history]

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(iters, losses, color="tab:blue", label="loss")
    ax.set_xlabel("iteration")
    ax.set_ylabel("negative log-likelihood", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(iters, nucs, color="tab:orange", linestyle="--", label="nuclear norm")
    ax2.set_ylabel("nuclear norm", color="tab:orange")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
