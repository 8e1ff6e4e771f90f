"""Exception hierarchy shared across the package."""


class IndChainsError(Exception):
    """Base class for all package errors."""


class StructuralError(IndChainsError, ValueError):
    """A game, kernel, policy or occupancy tensor is malformed."""


class ErgodicityError(IndChainsError):
    """An induced Markov chain has no unique stationary distribution."""


class InfeasibleError(IndChainsError):
    """A constraint system has an empty feasible set."""


class UnboundedError(IndChainsError):
    """A linear program has no finite optimum."""


class NumericalError(IndChainsError):
    """An iterative solver hit its iteration cap without converging."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfidenceCollapseError(IndChainsError):
    """Running intersection of confidence intervals became empty."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SnapshotError(IndChainsError, KeyError):
    """A requested occupancy snapshot was not stored in the run record."""

    def __init__(self, message, available=()):
        super().__init__(message)
        self.available = tuple(available)

    def __str__(self):
        return self.args[0]


class ConfigError(IndChainsError, ValueError):
    """Invalid experiment or game configuration."""
