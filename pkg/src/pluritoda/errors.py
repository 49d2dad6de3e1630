"""Exception hierarchy shared by all pluritoda modules."""


class PluritodaError(Exception):
    """Base class for all library errors."""


class InvalidParams(PluritodaError):
    """Family parameters violate an invariant (zero denominator, lambda == mu, ...)."""


class NoRoot(PluritodaError):
    """A leg inversion has no real solution for the requested value."""


class NonConvergence(PluritodaError):
    """An iterative solve exhausted its budget without meeting tolerance."""


class DomainCrossing(PluritodaError):
    """An antiderivative was requested across a domain singularity."""


class DomainViolation(PluritodaError):
    """A leg function was evaluated outside its real domain."""


class NoBranch(PluritodaError):
    """A shooting scan found no root in the search window."""


class PrerequisiteViolated(PluritodaError):
    """Input fields do not satisfy the corner equation required as a precondition."""


class MatchingFailed(PluritodaError):
    """Periodic branch matching was ambiguous or left branches unmatched."""


class ConfigError(PluritodaError):
    """A scenario or CLI configuration is malformed."""
