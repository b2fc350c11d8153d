"""Pluggable generation backends: a chat-completions HTTP client and a
deterministic mock.

The mock backend is the desk-scale stand-in for a cloud LLM: every task in
its rule set names a needle symbol, and a sample "solves" a task exactly
when that needle appeared somewhere in the prompt (otherwise only with a
small seeded base rate). This makes retrieval quality the only driver of
downstream pass rates, and makes evaluation runs reproducible bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import ConfigError, ProtocolError, TransportError


@dataclass(frozen=True)
class GenerationRequest:
    payload: list[dict]            # chat messages: [{"role": ..., "content": ...}]
    n_samples: int = 1
    temperature: float = 0.0
    max_tokens: int = 512
    seed: int | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.max_tokens <= 0:
            raise ConfigError("max_tokens must be positive")

    def flattened_text(self) -> str:
        return "\n".join(str(m.get("content", "")) for m in self.payload)


@dataclass(frozen=True)
class GenerationResponse:
    samples: tuple[str, ...]
    backend_id: str
    latency_ms: int


@dataclass(frozen=True)
class MockRule:
    needle: str
    base_rate: float = 0.05


@dataclass
class MockRules:
    seed: int = 0
    default_base_rate: float = 0.05
    tasks: dict[str, MockRule] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "MockRules":
        tasks = {}
        for task_id, spec in data.get("tasks", {}).items():
            tasks[task_id] = MockRule(
                needle=spec["needle"],
                base_rate=float(spec.get("base_rate", data.get("default_base_rate", 0.05))),
            )
        return cls(
            seed=int(data.get("seed", 0)),
            default_base_rate=float(data.get("default_base_rate", 0.05)),
            tasks=tasks,
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "default_base_rate": self.default_base_rate,
            "tasks": {
                tid: {"needle": r.needle, "base_rate": r.base_rate}
                for tid, r in sorted(self.tasks.items())
            },
        }


def load_mock_rules(path: str | Path) -> MockRules:
    with open(path, encoding="utf-8") as fh:
        return MockRules.from_dict(json.load(fh))


@dataclass
class BackendConfig:
    kind: str = "mock"                 # "mock" | "http"
    endpoint: str = ""
    model: str = "gpt-3.5-turbo"
    timeout_s: float = 30.0
    max_attempts: int = 3
    backoff_s: float = 0.5
    api_key_env: str = "CAMP_API_KEY"  # bearer token env var; never logged
    mock_rules: MockRules = field(default_factory=MockRules)


def generate(request: GenerationRequest, backend: BackendConfig) -> GenerationResponse:
    if backend.kind == "mock":
        return _generate_mock(request, backend.mock_rules)
    if backend.kind == "http":
        return _generate_http(request, backend)
    raise ConfigError(f"unknown backend kind {backend.kind!r}")


# ---------------------------------------------------------------------------
# mock backend: pure function of (payload, seed)


def _generate_mock(request: GenerationRequest, rules: MockRules) -> GenerationResponse:
    text = request.flattened_text()
    base_seed = request.seed if request.seed is not None else rules.seed
    samples = []
    for i in range(request.n_samples):
        solved: list[str] = []
        rng = random.Random(_mix_seed(text, base_seed, i))
        for task_id in sorted(rules.tasks):
            rule = rules.tasks[task_id]
            if rule.needle in text:
                solved.append(rule.needle)
            elif rng.random() < rule.base_rate:
                solved.append(rule.needle)
        if solved:
            body = "\n".join(f"    result = {needle}()" for needle in solved)
            samples.append(f"def suggestion():\n{body}\n")
        else:
            samples.append("def suggestion():\n    pass  # no grounded completion\n")
    return GenerationResponse(samples=tuple(samples), backend_id="mock", latency_ms=0)


def _mix_seed(text: str, seed: int, sample_index: int) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode())
    h.update(b"|")
    h.update(str(sample_index).encode())
    h.update(b"|")
    h.update(text.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


# ---------------------------------------------------------------------------
# HTTP backend: chat-completions JSON with bounded retry


def _generate_http(request: GenerationRequest, backend: BackendConfig) -> GenerationResponse:
    if not backend.endpoint:
        raise ConfigError("http backend requires an endpoint URL")
    body = {
        "model": backend.model,
        "messages": request.payload,
        "n": request.n_samples,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(backend.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    jitter = random.Random(request.seed if request.seed is not None else 0)
    started = time.monotonic()
    last_error: Exception | None = None
    response = None
    for attempt in range(backend.max_attempts):
        try:
            response = requests.post(
                backend.endpoint, json=body, headers=headers, timeout=backend.timeout_s
            )
            if response.status_code >= 500:
                last_error = TransportError(f"server error {response.status_code}")
                response = None
            elif response.status_code >= 400:
                raise ProtocolError(f"request rejected with status {response.status_code}")
            else:
                break
        except ProtocolError:
            raise
        except requests.RequestException as exc:
            last_error = exc
            response = None
        if attempt + 1 < backend.max_attempts and backend.backoff_s > 0:
            time.sleep(backend.backoff_s * (2**attempt) * (1.0 + jitter.random()))
    if response is None:
        raise TransportError(f"generation failed after {backend.max_attempts} attempts: {last_error}")

    latency_ms = int((time.monotonic() - started) * 1000)
    try:
        data = response.json()
        choices = data["choices"]
        samples = tuple(str(c["message"]["content"]) for c in choices)
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed chat-completions response: {exc}") from exc
    if len(samples) != request.n_samples:
        raise ProtocolError(
            f"expected {request.n_samples} samples, backend returned {len(samples)}"
        )
    return GenerationResponse(samples=samples, backend_id=backend.model, latency_ms=latency_ms)
