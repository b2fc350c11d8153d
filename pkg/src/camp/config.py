"""Engine configuration: one JSON file, flag and environment overrides.

Secrets never live in the file; the backend section only names the
environment variable that holds the API key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .engine import DEFAULT_SYSTEM_PROMPT, EngineSettings
from .errors import ConfigError
from .index import IndexConfig
from .lexer import DEFAULT_EXTENSION_PROFILES, PROFILES
from .llm import BackendConfig, load_mock_rules
from .prompt import DIALECT_CHAT, DIALECT_FLAT
from .retrieval import FusionWeights
from .training import TrainConfig


@dataclass
class EvalSettings:
    n_samples: int = 10
    ks: tuple[int, ...] = (1, 5, 10)
    workers: int = 4


@dataclass
class EnginePaths:
    index_cache: str = ".camp/index.bin"
    params_file: str = ".camp/params.bin"


@dataclass
class EngineConfig:
    index: IndexConfig = field(default_factory=IndexConfig)
    retrieval_k: int = 5
    fusion: FusionWeights = field(default_factory=FusionWeights)
    tau_c: int = 4
    prompt_budget: int = 2048
    prompt_dialect: str = DIALECT_CHAT
    chars_per_token: int = 4
    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    training: TrainConfig = field(default_factory=TrainConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    evaluation: EvalSettings = field(default_factory=EvalSettings)
    paths: EnginePaths = field(default_factory=EnginePaths)

    def engine_settings(self) -> EngineSettings:
        return EngineSettings(
            k=self.retrieval_k,
            fusion=self.fusion,
            tau_c=self.tau_c,
            budget=self.prompt_budget,
            chars_per_token=self.chars_per_token,
            system_prompt=self.system_prompt,
        )


def load_config(path: str | Path | None = None) -> EngineConfig:
    """Defaults, overlaid with the JSON config file when one is given."""
    cfg = EngineConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return _merge(cfg, data, base_dir=path.parent)


def _merge(cfg: EngineConfig, data: dict, base_dir: Path) -> EngineConfig:
    idx = data.get("index", {})
    if idx:
        profiles = idx.get("profiles", dict(DEFAULT_EXTENSION_PROFILES))
        for _, name in profiles.items():
            if name not in PROFILES:
                raise ConfigError(f"unknown language profile {name!r}")
        cfg.index = IndexConfig(
            extensions=tuple(idx.get("extensions", sorted(profiles))),
            profiles=tuple(sorted(profiles.items())),
            d_emb=int(idx.get("d_emb", cfg.index.d_emb)),
            query_profile=idx.get("query_profile", cfg.index.query_profile),
        )
        if cfg.index.d_emb < 2:
            raise ConfigError("index.d_emb must be >= 2")

    retr = data.get("retrieval", {})
    cfg.retrieval_k = int(retr.get("k", cfg.retrieval_k))
    if cfg.retrieval_k < 1:
        raise ConfigError("retrieval.k must be >= 1")
    fusion = retr.get("fusion", {})
    cfg.fusion = FusionWeights(
        input_text=float(fusion.get("input", 0.5)),
        context=float(fusion.get("context", 0.3)),
        user_query=float(fusion.get("user_query", 0.2)),
    )
    cfg.tau_c = int(retr.get("tau_c", cfg.tau_c))
    if cfg.tau_c < 1:
        raise ConfigError("retrieval.tau_c must be >= 1")

    pr = data.get("prompt", {})
    cfg.prompt_budget = int(pr.get("budget", cfg.prompt_budget))
    if cfg.prompt_budget <= 0:
        raise ConfigError("prompt.budget must be positive")
    cfg.prompt_dialect = pr.get("dialect", cfg.prompt_dialect)
    if cfg.prompt_dialect not in (DIALECT_CHAT, DIALECT_FLAT):
        raise ConfigError(f"unknown prompt dialect {cfg.prompt_dialect!r}")
    cfg.chars_per_token = int(pr.get("chars_per_token", cfg.chars_per_token))
    cfg.system_prompt = pr.get("system_prompt", cfg.system_prompt)

    tr = data.get("training", {})
    cfg.training = TrainConfig(
        max_iters=int(tr.get("max_iters", cfg.training.max_iters)),
        tol=float(tr.get("tol", cfg.training.tol)),
        step_h=float(tr.get("step_h", cfg.training.step_h)),
        step_eta=float(tr.get("step_eta", cfg.training.step_eta)),
        alpha=float(tr.get("alpha", cfg.training.alpha)),
        beta=float(tr.get("beta", cfg.training.beta)),
        nuclear_reg=float(tr.get("nuclear_reg", cfg.training.nuclear_reg)),
        fusion=cfg.fusion,
    )
    cfg.training.validate()

    be = data.get("backend", {})
    cfg.backend = BackendConfig(
        kind=be.get("kind", cfg.backend.kind),
        endpoint=be.get("endpoint", cfg.backend.endpoint),
        model=be.get("model", cfg.backend.model),
        timeout_s=float(be.get("timeout_s", cfg.backend.timeout_s)),
        max_attempts=int(be.get("max_attempts", cfg.backend.max_attempts)),
        backoff_s=float(be.get("backoff_s", cfg.backend.backoff_s)),
        api_key_env=be.get("api_key_env", cfg.backend.api_key_env),
    )
    if cfg.backend.kind not in ("mock", "http"):
        raise ConfigError(f"unknown backend kind {cfg.backend.kind!r}")
    if be.get("mock_rules"):
        cfg.backend.mock_rules = load_mock_rules(base_dir / be["mock_rules"])

    ev = data.get("evaluation", {})
    cfg.evaluation = EvalSettings(
        n_samples=int(ev.get("n_samples", cfg.evaluation.n_samples)),
        ks=tuple(int(k) for k in ev.get("ks", cfg.evaluation.ks)),
        workers=int(ev.get("workers", cfg.evaluation.workers)),
    )
    if cfg.evaluation.n_samples < max(cfg.evaluation.ks):
        raise ConfigError("evaluation.n_samples must be >= max(ks)")

    paths = data.get("paths", {})
    cfg.paths = EnginePaths(
        index_cache=paths.get("index_cache", cfg.paths.index_cache),
        params_file=paths.get("params_file", cfg.paths.params_file),
    )
    return cfg
