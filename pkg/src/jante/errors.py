"""Exception hierarchy."""


class JanteError(Exception):
    pass


class TopologyError(JanteError, ValueError):
    pass


class InvalidSizeError(TopologyError):
    pass


class SelfLoopError(TopologyError):
    pass


class DuplicateEdgeError(TopologyError):
    pass


class DisconnectedGraphError(TopologyError):
    pass


class NodeIndexError(TopologyError, IndexError):
    pass


class UnsupportedTopologyError(JanteError, ValueError):
    """Operation only defined on cycles (or on cycles of a minimum size)."""


class DistributionError(JanteError, ValueError):
    pass


class ConfigurationError(JanteError, ValueError):
    pass


class InvalidStopRuleError(JanteError, ValueError):
    pass


class DomainError(JanteError, ValueError):
    """Input lies outside the domain where a formula applies."""


class DegenerateIntervalError(DomainError):
    pass


class InsufficientDataError(JanteError, ValueError):
    pass


class SpecError(JanteError, ValueError):
    pass


class VerificationError(JanteError, AssertionError):
    """A proven inequality failed numerically: this is a bug, not bad luck."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
