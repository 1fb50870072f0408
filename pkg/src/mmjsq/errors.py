"""Exception hierarchy shared across the package."""


class MmJsqError(Exception):
    """Base class for all errors raised by this package."""


class EmptyChain(MmJsqError):
    """A modulating chain must have at least one state."""


class NegativeRate(MmJsqError):
    """An off-diagonal generator entry (a transition rate) is negative."""


class NotIrreducible(MmJsqError):
    """The positivity graph of the generator is not strongly connected."""


class SingularSystem(MmJsqError):
    """A linear solve failed or left a residual beyond tolerance."""


class InvalidModel(MmJsqError):
    """Model rates or dimensions violate the construction contract."""


class ZeroArrivalVector(MmJsqError):
    """Load scaling needs a nonzero base arrival-rate vector."""


class NonpositiveS(MmJsqError):
    """Laplace transforms are evaluated at s > 0 only."""


class UnstableModel(MmJsqError):
    """Simulation requires mean load strictly below one."""


class OverflowGuard(MmJsqError):
    """A queue exceeded the runaway guard (2**31 jobs)."""


class TooLarge(MmJsqError):
    """Truncated state space exceeds the exact-solver guard."""


class UnstableInput(MmJsqError):
    """Single-queue closed form needs arrival rate below service rate."""


class ParseError(MmJsqError):
    """A model file could not be parsed against the documented schema."""
