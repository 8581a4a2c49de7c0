"""Exception taxonomy shared by all modules.

Every error raised on purpose by this package derives from ``HeterospecError``
so callers (and the CLI) can map failures to exit codes without string
matching.
"""


class HeterospecError(Exception):
    """Base class for all package errors."""


class VocabularyError(HeterospecError):
    """Malformed vocabulary: non-dense ids, duplicate or empty token texts."""


class TokenizationFailure(HeterospecError):
    """Greedy tokenization got stuck: no token matches at some byte position."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class UnknownContext(HeterospecError):
    """A table model was queried with a context it has no entry for."""


class InvalidDraft(HeterospecError):
    """A draft token with zero drafter probability reached verification."""


class DegenerateResidual(HeterospecError):
    """Residual denominator vanished (target equals drafter); the caller
    must not reach the residual after a rejection in that case."""


class EmptyIntersectionMass(HeterospecError):
    """Intersection-renormalized drafter has zero mass on the shared tokens
    for this context."""


class RealignmentFailure(HeterospecError):
    """No token overlap found inside the lookbehind window."""


class ExpansionBudgetExceeded(HeterospecError):
    """The draft-sequence expansion hit its node budget."""

    def __init__(self, message: str, budget: int):
        super().__init__(message)
        self.budget = budget


class SearchBudgetExceeded(HeterospecError):
    """The lookahead-depth search hit its node budget."""

    def __init__(self, message: str, budget: int):
        super().__init__(message)
        self.budget = budget


class MissingFirstTokenTable(HeterospecError):
    """A string-level closed form was requested without its first-token
    mass table."""


class InstanceTooLarge(HeterospecError):
    """The exact enumeration oracle only handles tiny instances."""
