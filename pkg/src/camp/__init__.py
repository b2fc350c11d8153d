"""camp: context-aware retrieval-augmented prompt engine for codebases.

Indexes a local repository into a dynamic code symbol index, retrieves
context-ranked doc units through a learned bilinear model, assembles
priority-ordered prompts under a token budget, trains its retrieval
parameters with an accelerated proximal-gradient method, and benchmarks
end-to-end generation with Pass@K.
"""

from .context import ContextSignal, ContextVector, EnvironmentState
from .engine import MODEL_CONFIGS, EngineSettings, build_prompt
from .errors import CampError
from .index import (
    DocUnit,
    FileEdit,
    IndexConfig,
    IndexSnapshot,
    SymbolRecord,
    apply_edit,
    build_index,
    embed,
)
from .evaluation import EvalCase, EvalReport, pass_at_k, run_config, verify
from .llm import BackendConfig, GenerationRequest, GenerationResponse, generate
from .prompt import PromptComponent, PromptPlan, construct, serialize
from .retrieval import HeuristicMatrix, LearnedParams, RetrievalResult, retrieve, score
from .training import (
    TrainConfig,
    TrainingExample,
    loss_and_grads,
    svt,
    train_ordering,
    train_retrievers,
)

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "CampError",
    "ContextSignal",
    "ContextVector",
    "DocUnit",
    "EngineSettings",
    "EnvironmentState",
    "EvalCase",
    "EvalReport",
    "FileEdit",
    "GenerationRequest",
    "GenerationResponse",
    "HeuristicMatrix",
    "IndexConfig",
    "IndexSnapshot",
    "LearnedParams",
    "MODEL_CONFIGS",
    "PromptComponent",
    "PromptPlan",
    "RetrievalResult",
    "SymbolRecord",
    "TrainConfig",
    "TrainingExample",
    "apply_edit",
    "build_index",
    "build_prompt",
    "construct",
    "embed",
    "generate",
    "loss_and_grads",
    "pass_at_k",
    "retrieve",
    "run_config",
    "score",
    "serialize",
    "svt",
    "train_ordering",
    "train_retrievers",
    "verify",
]
