"""Exception types raised across the package."""


class PPGMMError(Exception):
    """Base class for all package errors."""


class NotFound(PPGMMError):
    """No Hamiltonian cycle exists in the graph."""


class NotPositiveDefinite(PPGMMError, ValueError):
    pass


class DegenerateDenominator(PPGMMError, FloatingPointError):
    """A responsibility row has a zero normaliser even in the log domain."""


class EmptyComponent(PPGMMError):
    """A mixture component lost (almost) all of its probability mass."""

    def __init__(self, component, mass):
        self.component = component
        self.mass = mass
        super().__init__(f"component {component} has mass {mass:.3e}")


class MaxItersExceeded(PPGMMError):
    """Consensus did not reach the stopping tolerance."""

    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")


class Unrecoverable(PPGMMError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"node {node}: every a_ij is below the recovery threshold")


class HonestSubgraphDisconnected(PPGMMError):
    """The honest nodes do not form a connected subgraph."""


class InsufficientSamples(PPGMMError, ValueError):
    pass


class ParseError(PPGMMError, ValueError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class NonNumeric(ParseError):
    pass


class RankDeficient(PPGMMError, ValueError):
    pass


class RetriesExhausted(PPGMMError):
    def __init__(self, retries):
        self.retries = retries
        super().__init__(f"no connected graph after {retries} attempts")
