"""Command-line entry point.

Commands: ``index``, ``retrieve``, ``prompt``, ``train``, ``eval``,
``verify``. Exit codes: 0 success, 1 runtime failure, 2 usage or
configuration error. All randomness flows from the global ``--seed``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import context as ctx_mod
from . import engine as engine_mod
from . import evaluation as eval_mod
from . import index as index_mod
from . import prompt as prompt_mod
from . import reporting
from . import retrieval as retr_mod
from . import synth
from . import training as train_mod
from .config import EngineConfig, load_config
from .errors import CampError, ConfigError, ManifestError

_MODEL_FLAGS = {
    "cloudonly": engine_mod.MODEL_CLOUD_ONLY,
    "baserag": engine_mod.MODEL_BASE_RAG,
    "filecontext": engine_mod.MODEL_FILE_CONTEXT,
    "camp": engine_mod.MODEL_CAMP,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camp",
        description="Context-aware retrieval-augmented prompt engine for codebases.",
    )
    parser.add_argument("--config", help="engine config JSON file")
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build or update the symbol index cache")
    p.add_argument("repo_root")
    p.add_argument("--cache", help="cache file (default: <repo>/.camp/index.bin)")
    p.add_argument("--verify", action="store_true", help="compare cache against a rebuild")
    p.add_argument("--edit", help="JSONL edit script to replay onto the cached snapshot")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="rank indexed doc units for a query")
    p.add_argument("env_file", help="environment state JSON")
    p.add_argument("query")
    p.add_argument("--k", type=int, help="number of results")
    p.add_argument("--user-query", help="optional explicit user question")
    p.add_argument("--cache")
    p.add_argument("--params")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("prompt", help="construct the full LLM prompt for a request")
    p.add_argument("env_file")
    p.add_argument("query")
    p.add_argument("--model", choices=sorted(_MODEL_FLAGS), default="camp")
    p.add_argument("--dialect", choices=[prompt_mod.DIALECT_CHAT, prompt_mod.DIALECT_FLAT])
    p.add_argument("--history", help="JSON file with [{role, content}, ...]")
    p.add_argument("--user-query")
    p.add_argument("--cache")
    p.add_argument("--params")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("train", help="learn retrieval parameters (and the ordering)")
    p.add_argument("data_file", help="training examples JSONL")
    p.add_argument("--repo", help="repository to index for training")
    p.add_argument("--cache", help="existing index cache to train against")
    p.add_argument("--out", help="parameter file (default: <repo>/.camp/params.bin)")
    p.add_argument("--loss-csv", help="loss history CSV (default: alongside params)")
    p.add_argument("--loss-figure", help="loss curve PNG (default: alongside params)")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--ordering", action="store_true", help="also learn the component order")
    p.add_argument("--manifest", help="held-out eval manifest for --ordering")
    p.add_argument("--mock-rules", help="mock backend rules for --ordering")
    p.add_argument("--epsilon", type=float, help="swap-significance threshold")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the Pass@K benchmark")
    p.add_argument("manifest")
    p.add_argument("--model", action="append", choices=sorted(_MODEL_FLAGS),
                   help="model configuration (repeatable; default: all four)")
    p.add_argument("--out", default="eval_report", help="report output directory")
    p.add_argument("--params")
    p.add_argument("--mock-rules")
    p.add_argument("--n", type=int, help="samples per task")
    p.add_argument("--ks", help="comma-separated K values, e.g. 1,5,10")
    p.add_argument("--reference", action="store_true",
                   help="append published reference results to the table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="check cache integrity against a fresh rebuild")
    p.add_argument("repo_root")
    p.add_argument("--cache")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str]) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, ManifestError) as exc:
        print(f"camp: {exc}", file=sys.stderr)
        return 2
    except CampError as exc:
        print(f"camp: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


# ---------------------------------------------------------------------------
# command implementations


def _cache_path(args, cfg: EngineConfig, repo_root: str | Path) -> Path:
    if getattr(args, "cache", None):
        return Path(args.cache)
    return Path(repo_root) / cfg.paths.index_cache


def _params_path(args, cfg: EngineConfig, repo_root: str | Path) -> Path:
    if getattr(args, "params", None):
        return Path(args.params)
    return Path(repo_root) / cfg.paths.params_file


def _load_snapshot(args, cfg: EngineConfig, repo_root: str | Path):
    cache = _cache_path(args, cfg, repo_root)
    if cache.is_file():
        return index_mod.load_cache(cache)
    return index_mod.build_index(repo_root, cfg.index)


def _load_params(args, cfg: EngineConfig, repo_root: str | Path, d_emb: int):
    path = _params_path(args, cfg, repo_root)
    if path.is_file():
        return retr_mod.load_params(path)
    return retr_mod.default_params(d_emb, prompt_mod.DEFAULT_ORDER)


def cmd_index(args, cfg: EngineConfig) -> int:
    root = Path(args.repo_root)
    if not root.is_dir():
        print(f"camp index: repository root not found: {root}", file=sys.stderr)
        return 2
    cache = _cache_path(args, cfg, root)

    if args.edit:
        if not cache.is_file():
            print("camp index: --edit requires an existing cache", file=sys.stderr)
            return 2
        snapshot = index_mod.load_cache(cache)
        n_edits = 0
        with open(args.edit, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                spec = json.loads(line)
                edit = index_mod.FileEdit(
                    file=spec["file"],
                    start=int(spec.get("start", 0)),
                    end=int(spec.get("end", 0)),
                    text=spec.get("text", ""),
                    delete_file=bool(spec.get("delete", False)),
                )
                snapshot = index_mod.apply_edit(snapshot, edit)
                n_edits += 1
        index_mod.save_cache(snapshot, cache)
        print(f"applied {n_edits} edits, revision {snapshot.revision}, "
              f"hash {snapshot.content_hash[:12]}")
        return 0

    fresh = index_mod.build_index(root, cfg.index)
    if args.verify:
        if not cache.is_file():
            print("camp index: --verify requires an existing cache", file=sys.stderr)
            return 2
        cached = index_mod.load_cache(cache)
        ok = cached.content_hash == fresh.content_hash
        print(f"cache {cached.content_hash[:12]} vs rebuild {fresh.content_hash[:12]}: "
              f"{'match' if ok else 'MISMATCH'}")
        return 0 if ok else 1

    if cache.is_file():
        cached = index_mod.load_cache(cache)
        if cached.content_hash == fresh.content_hash:
            print(f"up-to-date ({cached.content_hash[:12]})")
            return 0
        fresh = dataclasses.replace(fresh, revision=cached.revision + 1)
    index_mod.save_cache(fresh, cache)
    summary = {
        "symbols": len(fresh.records),
        "units": len(fresh.doc_units),
        "revision": fresh.revision,
        "content_hash": fresh.content_hash,
        "diagnostics": list(fresh.diagnostics),
    }
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(f"{summary['symbols']} symbols, {summary['units']} units")
        print(f"cache written to {cache} (hash {fresh.content_hash[:12]})")
    for diag in fresh.diagnostics:
        print(f"warning: {diag}", file=sys.stderr)
    return 0


def cmd_retrieve(args, cfg: EngineConfig) -> int:
    env_file = Path(args.env_file)
    if not env_file.is_file():
        print(f"camp retrieve: environment file not found: {env_file}\n"
              f"usage: camp retrieve ENV_FILE QUERY [--k N]", file=sys.stderr)
        return 2
    env = ctx_mod.load_environment(env_file)
    snapshot = _load_snapshot(args, cfg, env.repo_root)
    params = _load_params(args, cfg, env.repo_root, snapshot.config.d_emb)
    context = ctx_mod.context_for(env, snapshot, params.eta, cfg.tau_c)
    result = retr_mod.retrieve(
        snapshot, context, args.query, args.user_query, params.H,
        K=args.k or cfg.retrieval_k,
    )
    out = {
        "query_digest": result.query_digest,
        "n_candidates": result.n_candidates,
        "items": [
            {
                "unit_id": unit.unit_id,
                "file": unit.file,
                "name": unit.name,
                "kind": unit.kind,
                "probability": prob,
            }
            for unit, prob in result.items
        ],
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_prompt(args, cfg: EngineConfig) -> int:
    env_file = Path(args.env_file)
    if not env_file.is_file():
        print(f"camp prompt: environment file not found: {env_file}", file=sys.stderr)
        return 2
    env = ctx_mod.load_environment(env_file)
    snapshot = _load_snapshot(args, cfg, env.repo_root)
    params = _load_params(args, cfg, env.repo_root, snapshot.config.d_emb)
    history = None
    if args.history:
        turns = json.loads(Path(args.history).read_text(encoding="utf-8"))
        history = "\n".join(f"{t['role']}: {t['content']}" for t in turns)
    plan = engine_mod.build_prompt(
        _MODEL_FLAGS[args.model], snapshot, env, args.query, params,
        cfg.engine_settings(), user_query=args.user_query, history=history,
    )
    payload = prompt_mod.serialize(plan, args.dialect or cfg.prompt_dialect)
    if isinstance(payload, str):
        print(payload, end="")
    else:
        print(json.dumps(payload, indent=2))
    return 0


def cmd_train(args, cfg: EngineConfig) -> int:
    data_file = Path(args.data_file)
    if not data_file.is_file():
        print(f"camp train: training data not found: {data_file}", file=sys.stderr)
        return 2
    if not args.repo and not args.cache:
        print("camp train: need --repo or --cache", file=sys.stderr)
        return 2
    if args.cache:
        snapshot = index_mod.load_cache(args.cache)
        repo_root = snapshot.repo_root or "."
    else:
        repo_root = args.repo
        snapshot = _load_snapshot(args, cfg, repo_root)

    examples = synth.load_training_data(data_file, snapshot, str(repo_root))
    train_cfg = cfg.training
    train_cfg.fusion = cfg.fusion
    if args.max_iters is not None:
        train_cfg = dataclasses.replace(train_cfg, max_iters=args.max_iters)

    result = train_mod.train_retrievers(examples, snapshot, train_cfg)
    initial, final = result.history[0].loss, result.history[-1].loss

    theta = prompt_mod.DEFAULT_ORDER
    swap_evals = None
    if args.ordering:
        if not args.manifest:
            print("camp train: --ordering requires --manifest", file=sys.stderr)
            return 2
        theta, swap_evals = _learn_ordering(args, cfg, result, snapshot)

    params = retr_mod.LearnedParams(
        H=result.H,
        eta=result.eta,
        theta=theta,
        metadata={
            "iterations": result.state.iteration,
            "initial_loss": initial,
            "final_loss": final,
            "converged": result.converged,
            "seed": args.seed,
            "d_emb": snapshot.config.d_emb,
            "snapshot": snapshot.content_hash,
        },
    )
    out_path = Path(args.out) if args.out else Path(repo_root) / cfg.paths.params_file
    retr_mod.save_params(params, out_path)
    csv_path = Path(args.loss_csv) if args.loss_csv else out_path.with_name("loss_history.csv")
    train_mod.export_loss_csv(result.history, csv_path)
    fig_path = (
        Path(args.loss_figure) if args.loss_figure else out_path.with_name("loss_history.png")
    )
    reporting.render_loss_figure(result.history, fig_path)

    summary = {
        "iterations": result.state.iteration,
        "initial_loss": initial,
        "final_loss": final,
        "loss_decreased": final < initial,
        "converged": result.converged,
        "nuclear_norm": result.H.nuclear_norm,
        "eta": [float(x) for x in result.eta],
        "params_file": str(out_path),
        "loss_csv": str(csv_path),
        "loss_figure": str(fig_path),
    }
    if args.ordering:
        summary["theta"] = list(theta)
        summary["swap_evaluations"] = swap_evals
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(f"trained {summary['iterations']} iterations; "
              f"loss {initial:.6f} -> {final:.6f}; "
              f"final_loss < initial_loss: {summary['loss_decreased']}")
        print(f"params written to {out_path}")
        print(f"loss history: {csv_path} (figure {fig_path})")
        if args.ordering:
            print(f"learned ordering: {' > '.join(theta)}")
            print(f"swap evaluations: {swap_evals} (pairs of {len(theta)} kinds)")
    return 0


def _learn_ordering(args, cfg, result, snapshot):
    cases = eval_mod.load_manifest(args.manifest)
    backend = cfg.backend
    if args.mock_rules:
        from .llm import load_mock_rules

        backend = dataclasses.replace(backend, mock_rules=load_mock_rules(args.mock_rules))
    calls = {"n": 0}

    def eval_loss(perm: tuple[str, ...]) -> float:
        calls["n"] += 1
        trial = retr_mod.LearnedParams(H=result.H, eta=result.eta, theta=perm, metadata={})
        report = eval_mod.run_config(
            engine_mod.MODEL_CAMP, cases, backend,
            n=cfg.evaluation.n_samples, ks=(1,),
            params=trial, settings=cfg.engine_settings(),
            index_config=cfg.index, seed=args.seed, workers=cfg.evaluation.workers,
        )
        rates = [report.pass_at_k(engine_mod.MODEL_CAMP, lv, 1) or 0.0
                 for lv in report.levels()]
        return 1.0 - (sum(rates) / len(rates) if rates else 0.0)

    epsilon = args.epsilon if args.epsilon is not None else train_mod.DEFAULT_ORDERING_EPSILON
    theta = train_mod.train_ordering(prompt_mod.DEFAULT_ORDER, eval_loss, epsilon)
    return theta, calls["n"] - 1  # swap evaluations exclude the baseline call


def cmd_eval(args, cfg: EngineConfig) -> int:
    manifest = Path(args.manifest)
    if not manifest.is_file():
        print(f"camp eval: manifest not found: {manifest}", file=sys.stderr)
        return 2
    cases = eval_mod.load_manifest(manifest)

    backend = cfg.backend
    if args.mock_rules:
        from .llm import load_mock_rules

        backend = dataclasses.replace(backend, mock_rules=load_mock_rules(args.mock_rules))

    params = None
    if args.params:
        params = retr_mod.load_params(args.params)
    n = args.n or cfg.evaluation.n_samples
    ks = tuple(int(k) for k in args.ks.split(",")) if args.ks else cfg.evaluation.ks
    models = [_MODEL_FLAGS[m] for m in (args.model or sorted(_MODEL_FLAGS))]
    models = [m for m in engine_mod.MODEL_CONFIGS if m in models]

    reports = [
        eval_mod.run_config(
            model, cases, backend, n=n, ks=ks, params=params,
            settings=cfg.engine_settings(), index_config=cfg.index,
            seed=args.seed, workers=cfg.evaluation.workers,
        )
        for model in models
    ]
    report = eval_mod.merge_reports(reports)

    out_dir = Path(args.out)
    json_path = reporting.write_report_json(report, out_dir / "report.json")
    csv_path = reporting.write_report_csv(report, out_dir / "report.csv")
    table = reporting.render_table(report, reference=args.reference)
    (out_dir / "report.txt").write_text(table, encoding="utf-8")
    figures = reporting.render_report_figures(report, out_dir)

    if args.json:
        print(report.to_json(), end="")
    else:
        print(table, end="")
        print(f"report files: {json_path}, {csv_path}, "
              + ", ".join(str(p) for p in figures))
    return 0


def cmd_verify(args, cfg: EngineConfig) -> int:
    root = Path(args.repo_root)
    if not root.is_dir():
        print(f"camp verify: repository root not found: {root}", file=sys.stderr)
        return 2
    cache = _cache_path(args, cfg, root)
    if not cache.is_file():
        print(f"camp verify: no index cache at {cache}", file=sys.stderr)
        return 2
    cached = index_mod.load_cache(cache)
    fresh = index_mod.build_index(root, cached.config)
    dangling = index_mod.dangling_edges(cached)
    ok = cached.content_hash == fresh.content_hash and not dangling
    status = {
        "cache_hash": cached.content_hash,
        "rebuild_hash": fresh.content_hash,
        "hashes_match": cached.content_hash == fresh.content_hash,
        "dangling_edges": dangling,
    }
    if args.json:
        print(json.dumps(status, indent=2, sort_keys=True))
    else:
        print(f"cache {status['cache_hash'][:12]} vs rebuild {status['rebuild_hash'][:12]}: "
              f"{'match' if status['hashes_match'] else 'MISMATCH'}; "
              f"{len(dangling)} dangling edges")
    return 0 if ok else 1
