"""Exception hierarchy shared by all ragplan modules."""


class RagPlanError(Exception):
    """Base class for every error raised by ragplan."""


class SchemaError(RagPlanError, ValueError):
    """A document failed to parse or violated its schema.

    ``issues`` holds ``(path, message)`` pairs; ``str()`` joins them as
    ``path: message``.
    """

    def __init__(self, issues):
        if isinstance(issues, tuple) and len(issues) == 2 and isinstance(issues[0], str):
            issues = [issues]
        self.issues = list(issues)
        super().__init__("; ".join(f"{p}: {m}" if p else m for p, m in self.issues))


class ConfigError(RagPlanError, ValueError):
    """An algorithm configuration is internally inconsistent."""


class LoweringError(ConfigError):
    """A configuration cannot be lowered into a RAG-IR."""


class CapacityError(RagPlanError, ValueError):
    """An allocation asks for more units or memory than the pool has."""


class PlacementError(CapacityError):
    """A placement does not fit the IR or the pool."""


class InfeasibleError(RagPlanError):
    """No placement satisfies capacity and SLO constraints.

    ``best_effort`` carries the best placement found when only the SLO
    could not be met (``None`` for pure capacity failures).
    """

    def __init__(self, message, oversized=(), best_effort=None):
        super().__init__(message)
        self.oversized = tuple(oversized)
        self.best_effort = best_effort


class EstimationError(RagPlanError):
    """The cost model cannot produce an estimate (e.g. calibration miss)."""


class QualityMiss(RagPlanError, KeyError):
    """A quality table has no entry for the requested configuration."""

    def __str__(self):
        return Exception.__str__(self)


class SpaceExhausted(RagPlanError):
    """Every point of the configuration space has been explored."""
