"""Exception types raised across the toolkit."""


class NetwardError(Exception):
    """Base class for all toolkit errors."""


class SelfLoop(NetwardError):
    """An edge edit named the same node twice."""


class InfeasibleFlip(NetwardError):
    """A flip would push an adjacency entry outside {0, 1}."""


class ShapeMismatch(NetwardError):
    """Array shapes are inconsistent with the graph or model."""


class DivergedLoss(NetwardError):
    """Training loss became non-finite."""


class NoFeasibleFlip(NetwardError):
    """An attack found no candidate flip it is allowed to apply."""


class TooLarge(NetwardError):
    """Input exceeds a guard meant for exhaustive computation."""


class EmptyScope(NetwardError):
    """A defense was given an empty set of nodes to protect."""


class EmptySet(NetwardError):
    """A metric was asked to aggregate over zero records."""


class UndefinedBaseline(NetwardError):
    """ADR is undefined because the undefended attack never succeeded."""


class NoEdges(NetwardError):
    """Modularity is undefined on a graph with no edges."""


class ParseError(NetwardError):
    """A dataset file failed to parse. Carries the offending line number."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class CountMismatch(NetwardError):
    """Loaded data disagrees with the manifest's expected counts."""


class DataError(NetwardError):
    """A report aggregate was NaN or otherwise unusable."""


class IoError(NetwardError):
    """A report or artifact could not be written."""
