"""Prompt assembly: ordering, token budgeting, and serialization.

Five component kinds make up a prompt. Each carries a priority; when the
assembled plan exceeds the token budget, tokens are removed in ascending
priority order (all low-priority content goes before any medium-priority
content is touched, and so on). Within a component, truncation is
tail-first, except message history, which drops its oldest lines first.
The new message is never truncated.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

from .errors import BudgetTooSmallError, ConfigError

CONTEXT_SYSTEM_PROMPT = "context_system_prompt"
RETRIEVED_CONTENT = "retrieved_content"
NEW_MESSAGE = "new_message"
MESSAGE_HISTORY = "message_history"
SYSTEM_PROMPT = "system_prompt"

KINDS = (CONTEXT_SYSTEM_PROMPT, RETRIEVED_CONTENT, NEW_MESSAGE, MESSAGE_HISTORY, SYSTEM_PROMPT)

PRIORITY_HIGH = "high"
PRIORITY_MEDIUM = "medium"
PRIORITY_LOW = "low"
_PRIORITY_RANK = {PRIORITY_LOW: 0, PRIORITY_MEDIUM: 1, PRIORITY_HIGH: 2}

DEFAULT_PRIORITIES = {
    CONTEXT_SYSTEM_PROMPT: PRIORITY_HIGH,
    RETRIEVED_CONTENT: PRIORITY_HIGH,
    NEW_MESSAGE: PRIORITY_HIGH,
    MESSAGE_HISTORY: PRIORITY_MEDIUM,
    SYSTEM_PROMPT: PRIORITY_LOW,
}

# Starting order: descending default priority, until a learned ordering is
# published through the parameter file.
DEFAULT_ORDER = (
    CONTEXT_SYSTEM_PROMPT, RETRIEVED_CONTENT, NEW_MESSAGE, MESSAGE_HISTORY, SYSTEM_PROMPT
)

CHAT_ROLES = {
    CONTEXT_SYSTEM_PROMPT: "system",
    RETRIEVED_CONTENT: "system",
    NEW_MESSAGE: "user",
    MESSAGE_HISTORY: "assistant",
    SYSTEM_PROMPT: "system",
}

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def count_tokens(text: str, chars_per_token: int = 4) -> int:
    """Whitespace-and-punctuation token count with a chars-based fallback."""
    n = len(_TOKEN_RE.findall(text))
    if n == 0 and text.strip():
        return math.ceil(len(text) / chars_per_token)
    return n


@dataclass(frozen=True)
class PromptComponent:
    kind: str
    text: str
    priority: str
    token_count: int


def make_component(
    kind: str,
    text: str,
    priority: str | None = None,
    chars_per_token: int = 4,
) -> PromptComponent:
    if kind not in KINDS:
        raise ConfigError(f"unknown prompt component kind {kind!r}")
    priority = priority or DEFAULT_PRIORITIES[kind]
    if priority not in _PRIORITY_RANK:
        raise ConfigError(f"unknown priority {priority!r}")
    return PromptComponent(kind, text, priority, count_tokens(text, chars_per_token))


@dataclass(frozen=True)
class PromptPlan:
    ordered: tuple[PromptComponent, ...]
    ordering: tuple[str, ...]
    budget: int
    total_tokens: int


def construct(
    components: list[PromptComponent],
    ordering: tuple[str, ...] = DEFAULT_ORDER,
    budget: int = 2048,
    chars_per_token: int = 4,
) -> PromptPlan:
    if budget <= 0:
        raise ConfigError("budget must be positive")
    if len(set(ordering)) != len(ordering) or any(k not in KINDS for k in ordering):
        raise ConfigError("ordering must be a permutation over component kinds")
    kinds_present = [c.kind for c in components]
    if len(set(kinds_present)) != len(kinds_present):
        raise ConfigError("at most one component per kind")
    missing = set(kinds_present) - set(ordering)
    if missing:
        raise ConfigError(f"ordering does not place kinds: {sorted(missing)}")
    if not any(c.priority == PRIORITY_HIGH for c in components):
        raise ConfigError("need at least one high-priority component")

    by_kind = {c.kind: c for c in components}
    arranged = [by_kind[k] for k in ordering if k in by_kind]

    new_message = by_kind.get(NEW_MESSAGE)
    if new_message is not None and new_message.token_count > budget:
        raise BudgetTooSmallError("budget too small for request")

    total = sum(c.token_count for c in arranged)
    over = total - budget
    if over > 0:
        arranged = _shed_tokens(arranged, over, chars_per_token)
        total = sum(c.token_count for c in arranged)

    return PromptPlan(
        ordered=tuple(arranged), ordering=tuple(ordering), budget=budget, total_tokens=total
    )


def _shed_tokens(
    arranged: list[PromptComponent], over: int, chars_per_token: int
) -> list[PromptComponent]:
    """Remove ``over`` tokens, lowest priority first; within a tier, later
    plan positions lose first. A tier is exhausted before the next is touched,
    so any loss in a high component implies lower tiers were dropped whole."""
    result = list(arranged)
    for rank in sorted(set(_PRIORITY_RANK.values())):
        if over <= 0:
            break
        victims = [
            i for i in reversed(range(len(result)))
            if _PRIORITY_RANK[result[i].priority] == rank and result[i].kind != NEW_MESSAGE
        ]
        for i in victims:
            if over <= 0:
                break
            comp = result[i]
            keep = max(0, comp.token_count - over)
            trimmed = _truncate(comp, keep, chars_per_token)
            over -= comp.token_count - trimmed.token_count
            result[i] = trimmed
    return [c for c in result if c.token_count > 0]


def _truncate(comp: PromptComponent, keep: int, chars_per_token: int) -> PromptComponent:
    if keep <= 0:
        return replace(comp, text="", token_count=0)
    if comp.kind == MESSAGE_HISTORY:
        return _truncate_history(comp, keep, chars_per_token)
    matches = list(_TOKEN_RE.finditer(comp.text))
    if len(matches) <= keep:
        if matches:
            return comp
        # chars-per-token fallback text: cut raw characters from the tail
        text = comp.text[: keep * chars_per_token]
        return replace(comp, text=text, token_count=count_tokens(text, chars_per_token))
    text = comp.text[: matches[keep - 1].end()]
    return replace(comp, text=text, token_count=count_tokens(text, chars_per_token))


def _truncate_history(comp: PromptComponent, keep: int, chars_per_token: int) -> PromptComponent:
    """Drop whole history lines, oldest (leading) first, until within keep."""
    lines = comp.text.split("\n")
    while lines:
        text = "\n".join(lines)
        n = count_tokens(text, chars_per_token)
        if n <= keep:
            return replace(comp, text=text, token_count=n)
        lines.pop(0)
    return replace(comp, text="", token_count=0)


# ---------------------------------------------------------------------------
# serialization

DIALECT_CHAT = "chat_messages"
DIALECT_FLAT = "flat_text"


def serialize(plan: PromptPlan, dialect: str = DIALECT_CHAT):
    if dialect == DIALECT_CHAT:
        return [{"role": CHAT_ROLES[c.kind], "content": c.text} for c in plan.ordered]
    if dialect == DIALECT_FLAT:
        chunks = []
        for c in plan.ordered:
            chunks.append(f"<<<{c.kind} {len(c.text.encode('utf-8'))}>>>\n{c.text}\n")
        return "".join(chunks)
    raise ConfigError(f"unknown prompt dialect {dialect!r}")


_FLAT_HEADER_RE = re.compile(rb"<<<([a-z_]+) (\d+)>>>\n")


def parse_flat_text(payload: str) -> list[tuple[str, str]]:
    """Recover (kind, text) pairs from a flat_text serialization."""
    data = payload.encode("utf-8")
    out: list[tuple[str, str]] = []
    off = 0
    while off < len(data):
        m = _FLAT_HEADER_RE.match(data, off)
        if m is None:
            raise ValueError(f"malformed flat_text payload at byte {off}")
        kind = m.group(1).decode("ascii")
        length = int(m.group(2))
        start = m.end()
        text = data[start : start + length].decode("utf-8")
        off = start + length
        if data[off : off + 1] != b"\n":
            raise ValueError("malformed flat_text payload: missing terminator")
        off += 1
        out.append((kind, text))
    return out
