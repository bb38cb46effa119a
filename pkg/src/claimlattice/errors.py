"""Exception types shared across the engine."""

from __future__ import annotations


class ClaimLatticeError(Exception):
    """Base class for all engine errors."""


class DomainMismatch(ClaimLatticeError):
    """Two assessment values from different domains met in one operation."""


class UnknownNode(ClaimLatticeError):
    pass


class UnknownClaim(ClaimLatticeError):
    pass


class DuplicateClaim(ClaimLatticeError):
    pass


class EmptyClaim(ClaimLatticeError):
    """Claim text was empty, or canonicalization reduced it to nothing."""


class MissingPlaceholderData(ClaimLatticeError):
    """A prompt template needed data the call site did not supply."""


class MalformedResponse(ClaimLatticeError):
    """An agent reply failed schema validation.

    Never mutates run state: callers record a diagnostic and move on.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{message} (field: {field})"
        super().__init__(message)


class NoScriptEntry(ClaimLatticeError):
    """The scripted backend has no entry for a call it received.

    Always a scenario bug; scripted scenarios must cover every call.
    """


class AgentTransportError(ClaimLatticeError):
    """The remote backend could not reach its endpoint at all."""


class BudgetExceeded(ClaimLatticeError):
    """A termination budget was violated. Fatal; the run stops immediately."""


class InvariantViolation(ClaimLatticeError):
    """A runtime soundness check failed (frame or enqueue justification)."""


class UnknownRevisionTarget(ClaimLatticeError):
    pass


class RevisionDuringRun(ClaimLatticeError):
    """Revision was requested while the worklist still had members."""


class ScenarioError(ClaimLatticeError):
    """A scenario is internally inconsistent in a way only a run can expose."""


class ParseError(ClaimLatticeError):
    """Scenario file is not syntactically valid."""


class ValidationError(ClaimLatticeError):
    """Scenario content failed validation. Carries every diagnostic at once."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        summary = "; ".join(self.diagnostics)
        super().__init__(f"{len(self.diagnostics)} validation problem(s): {summary}")
