"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """A component was constructed with inconsistent settings."""


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate.

    ``key`` names the offending config key, ``line`` the 1-based source line,
    and ``conjunct`` the violated constraint, whichever apply.
    """

    def __init__(self, message, *, key=None, line=None, conjunct=None):
        super().__init__(message)
        self.key = key
        self.line = line
        self.conjunct = conjunct


class EnvelopeViolation(RuntimeError):
    """A follower policy asked for an acceleration outside the admissible set."""

    def __init__(self, message, runs=()):
        super().__init__(message)
        self.runs = tuple(int(r) for r in runs)


class AdversaryContractError(RuntimeError):
    """A lead strategy produced an acceleration below -B or above its cap."""


class TraceError(ValueError):
    """A trace is structurally malformed (discontinuous or bad timing)."""
