"""Exception hierarchy shared by every lgspan module."""

from __future__ import annotations


class LGSpanError(Exception):
    """Base class for all errors raised by lgspan."""


class ValidationError(LGSpanError, ValueError):
    """Malformed graph, program, table or configuration."""


class BudgetExceededError(LGSpanError):
    """A brute-force enumeration would exceed its configured budget."""

    def __init__(self, what: str, required: int, budget: int):
        super().__init__(f"{what}: {required} exceeds budget {budget}")
        self.what = what
        self.required = required
        self.budget = budget


class GraphDoesNotComputeError(LGSpanError):
    """Some 1-input has no accepting vertex in the learning graph."""

    def __init__(self, x):
        super().__init__(f"graph does not compute f: input {tuple(x)} has no accepting vertex")
        self.x = tuple(x)


class InfeasibleFlowError(LGSpanError):
    """No unit flow from the root reaches the requested sinks."""


class ConservationError(LGSpanError):
    """A flow violates source intensity or conservation."""

    def __init__(self, message: str, vertex=None, excess=None):
        super().__init__(message)
        self.vertex = vertex
        self.excess = excess


class StructuralError(LGSpanError):
    """A linear system that should be regular turned out singular."""


class DimensionCapError(LGSpanError):
    """A span program would exceed the configured vector-space dimension."""

    def __init__(self, required: int, cap: int):
        super().__init__(f"span program dimension {required} exceeds cap {cap}")
        self.required = required
        self.cap = cap


class WitnessError(LGSpanError):
    """Requested witness kind does not exist for this input."""


class MisclassifiedInputError(LGSpanError):
    """A span program disagrees with the labeling of an input."""

    def __init__(self, x, expected: int, got: int):
        super().__init__(f"input {tuple(x)}: expected {expected}, program gives {got}")
        self.x = tuple(x)
        self.expected = expected
        self.got = got


class SymmetryError(LGSpanError):
    """Flow or graph fails a symmetry hypothesis."""

    def __init__(self, message: str, orbit=None):
        super().__init__(message)
        self.orbit = orbit


class UnbalancedSubroutineError(LGSpanError):
    """Subroutine negative and positive complexities differ."""

    def __init__(self, vertex, negative: float, positive: float):
        super().__init__(
            f"subroutine at vertex {vertex} is unbalanced: negative={negative}, positive={positive}"
        )
        self.vertex = vertex
        self.negative = negative
        self.positive = positive


class UnboundedError(LGSpanError):
    """Linear program is unbounded below."""


class InfeasibleError(LGSpanError):
    """Linear program has no feasible point."""
