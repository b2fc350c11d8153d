"""Exception hierarchy for the camp engine."""


class CampError(Exception):
    """Base class for all engine errors."""


class ConfigError(CampError):
    """Invalid or inconsistent engine configuration."""


class IndexingError(CampError):
    """Fatal failure while building or loading an index."""


class EditRejectedError(CampError):
    """An edit could not be applied; the snapshot is unchanged."""


class EmptyFragmentError(CampError):
    """A fragment tokenized to nothing and cannot be embedded."""


class DegenerateContextError(CampError):
    """All context weights are zero after masking absent sources."""


class EmptyQueryError(CampError):
    """No usable query material: empty input, empty user query, zero context."""


class DimensionMismatchError(ConfigError):
    """Embedding / matrix dimensions are inconsistent."""


class BudgetTooSmallError(CampError):
    """The new message alone does not fit in the prompt token budget."""


class TrainingDivergedError(CampError):
    """Training produced a non-finite loss; carries a state dump."""

    def __init__(self, message: str, state_dump: dict | None = None):
        super().__init__(message)
        self.state_dump = state_dump or {}


class OrderingCycleError(CampError):
    """Pairwise preferences are cyclic; no consistent ordering exists."""

    def __init__(self, cycle: list[str]):
        super().__init__(
            "inconsistent pairwise preferences: " + " -> ".join(cycle + cycle[:1])
        )
        self.cycle = cycle


class GenerationError(CampError):
    """Base class for generation-backend failures."""


class TransportError(GenerationError):
    """HTTP transport failed after all retry attempts."""


class ProtocolError(GenerationError):
    """The backend answered, but the response body is malformed."""


class ManifestError(CampError):
    """An evaluation manifest or fixture is invalid."""
