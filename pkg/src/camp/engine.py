"""Top-level pipeline: environment in, budgeted suggestion prompt out.

Four model configurations share this path:

* ``CloudOnly``   - the request alone, no local processing.
* ``BaseRAG``     - standard retrieval with an identity heuristic and no
                    context vector.
* ``FileContext`` - the full pipeline with retrieval restricted to the
                    cursor's file.
* ``CAMP``        - the full pipeline: learned context weights, learned
                    heuristic matrix, learned component ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import context as ctx_mod
from . import prompt as prompt_mod
from . import retrieval as retr_mod
from .context import ContextVector, EnvironmentState
from .errors import ConfigError
from .index import IndexSnapshot
from .prompt import PromptPlan
from .retrieval import FusionWeights, LearnedParams

MODEL_CLOUD_ONLY = "CloudOnly"
MODEL_BASE_RAG = "BaseRAG"
MODEL_FILE_CONTEXT = "FileContext"
MODEL_CAMP = "CAMP"
MODEL_CONFIGS = (MODEL_CLOUD_ONLY, MODEL_BASE_RAG, MODEL_FILE_CONTEXT, MODEL_CAMP)

DEFAULT_SYSTEM_PROMPT = (
    "You are a coding assistant. Complete the request using the repository "
    "context provided, and answer with code."
)


@dataclass
class EngineSettings:
    k: int = retr_mod.DEFAULT_K
    fusion: FusionWeights = field(default_factory=FusionWeights)
    tau_c: int = ctx_mod.DEFAULT_TAU_C
    budget: int = 2048
    chars_per_token: int = 4
    system_prompt: str = DEFAULT_SYSTEM_PROMPT


def build_prompt(
    model: str,
    snapshot: IndexSnapshot,
    env: EnvironmentState,
    query: str,
    params: LearnedParams,
    settings: EngineSettings | None = None,
    user_query: str | None = None,
    history: str | None = None,
) -> PromptPlan:
    """Assemble the prompt plan for one model configuration."""
    if model not in MODEL_CONFIGS:
        raise ConfigError(f"unknown model configuration {model!r}")
    settings = settings or EngineSettings()

    components = [
        prompt_mod.make_component(
            prompt_mod.SYSTEM_PROMPT, settings.system_prompt,
            chars_per_token=settings.chars_per_token,
        ),
        prompt_mod.make_component(
            prompt_mod.NEW_MESSAGE, query, chars_per_token=settings.chars_per_token
        ),
    ]
    if history:
        components.append(
            prompt_mod.make_component(
                prompt_mod.MESSAGE_HISTORY, history, chars_per_token=settings.chars_per_token
            )
        )

    ordering = prompt_mod.DEFAULT_ORDER
    if model != MODEL_CLOUD_ONLY:
        context: ContextVector | None = None
        if model in (MODEL_FILE_CONTEXT, MODEL_CAMP):
            context = ctx_mod.context_for(env, snapshot, params.eta, settings.tau_c)
            components.append(
                prompt_mod.make_component(
                    prompt_mod.CONTEXT_SYSTEM_PROMPT,
                    render_context_text(context),
                    chars_per_token=settings.chars_per_token,
                )
            )
            ordering = params.theta

        if model == MODEL_BASE_RAG:
            H = retr_mod.HeuristicMatrix.identity(snapshot.config.d_emb)
            retrieval_context = None
            restrict = None
        elif model == MODEL_FILE_CONTEXT:
            H = params.H
            retrieval_context = context
            restrict = {env.cursor.file} if env.cursor is not None else set()
        else:
            H = params.H
            retrieval_context = context
            restrict = None

        result = retr_mod.retrieve(
            snapshot, retrieval_context, query, user_query, H,
            K=settings.k, restrict_files=restrict,
        )
        if result.items:
            components.append(
                prompt_mod.make_component(
                    prompt_mod.RETRIEVED_CONTENT,
                    render_retrieved_text(result),
                    chars_per_token=settings.chars_per_token,
                )
            )

    return prompt_mod.construct(
        components, ordering=ordering, budget=settings.budget,
        chars_per_token=settings.chars_per_token,
    )


def render_context_text(context: ContextVector) -> str:
    """Human/LLM-readable rendering of the positive-weight context entries,
    strongest source first."""
    ranked = sorted(
        (e for e in context.entries if e[1] > 0),
        key=lambda e: (-e[1], ctx_mod.SOURCES.index(e[0].source)),
    )
    lines = ["Local development context:"]
    for signal, _ in ranked:
        if signal.source == ctx_mod.SOURCE_CURSOR:
            p = signal.payload
            lines.append(f"Cursor at {p['file']}:{p['line'] + 1}:{p['col']} inside this unit:")
            lines.append(_indent(_unit_text_for(signal)))
        elif signal.source == ctx_mod.SOURCE_REPO_PATH:
            lines.append(f"Repository: {signal.payload}")
        elif signal.source == ctx_mod.SOURCE_ARTIFACTS:
            lines.append("Build artifacts: " + ", ".join(signal.payload))
        elif signal.source == ctx_mod.SOURCE_INDEX_INFO:
            lines.append("Key repository symbols: " + ", ".join(signal.payload))
    return "\n".join(lines)


def render_retrieved_text(result) -> str:
    lines = ["Relevant code from the repository:"]
    for unit, _prob in result.items:
        title = unit.name or unit.kind
        lines.append(f"--- {unit.file} :: {title} ---")
        lines.append(unit.text)
    return "\n".join(lines)


def _unit_text_for(signal) -> str:
    return signal.payload.get("unit_text", "") or ""


def _indent(text: str, pad: str = "    ") -> str:
    return "\n".join(pad + line for line in text.split("\n"))
