"""Exception hierarchy shared by every quasi_equilibria module."""

from __future__ import annotations

from typing import Optional, Sequence


class QuasiEquilibriaError(Exception):
    """Base class for all errors raised by this package."""


# --- expressions -----------------------------------------------------------


class ExprError(QuasiEquilibriaError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    def __init__(self, name: str, offset: int) -> None:
        super().__init__(f"unknown function {name!r}", offset)
        self.name = name


class ArityError(ExprSyntaxError):
    def __init__(self, name: str, count: int, offset: int) -> None:
        super().__init__(f"{name}() does not accept {count} argument(s)", offset)
        self.name = name
        self.count = count


class UnboundVariableError(ExprError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unbound variable {name!r}")
        self.name = name


class ExprDomainError(ExprError):
    pass


# --- instances -------------------------------------------------------------


class InstanceError(QuasiEquilibriaError):
    pass


class SchemaError(InstanceError):
    pass


class InvariantViolation(InstanceError):
    pass


class DimensionMismatch(InstanceError):
    pass


class UnknownGalleryError(InstanceError):
    pass


class InvalidParamsError(InstanceError):
    pass


class RawModeError(QuasiEquilibriaError):
    """Raised when a reduction is asked to solve a per-leader coupling instance."""


class MissingPotentialError(QuasiEquilibriaError):
    pass


# --- follower VI -----------------------------------------------------------


class EmptyFeasibleSetError(QuasiEquilibriaError):
    pass


class NotConverged(QuasiEquilibriaError):
    def __init__(self, best_residual: float, best_point: Optional[Sequence[float]] = None) -> None:
        super().__init__(f"VI iteration did not converge (best residual {best_residual:.3e})")
        self.best_residual = best_residual
        self.best_point = None if best_point is None else tuple(best_point)


class EmptySolutionSet(QuasiEquilibriaError):
    def __init__(self, x: Sequence[float]) -> None:
        super().__init__(f"no follower solution found at x={tuple(x)}")
        self.x = tuple(x)


# --- potential / solvers / verify -------------------------------------------


class ExistenceCheckFailed(QuasiEquilibriaError):
    def __init__(self, report) -> None:
        super().__init__(
            f"mixed-partial symmetry check failed (max deviation {report.max_deviation:.3e})"
        )
        self.report = report


class InfeasibleProblem(QuasiEquilibriaError):
    pass


class MultivaluedDetected(QuasiEquilibriaError):
    def __init__(self, x: Sequence[float], count: int) -> None:
        super().__init__(f"follower solution set has {count} members at x={tuple(x)}")
        self.x = tuple(x)
        self.count = count


class InfeasibleCandidate(QuasiEquilibriaError):
    pass


class KinkDetected(QuasiEquilibriaError):
    def __init__(self, leader: int, variable: str, forward: float, backward: float) -> None:
        super().__init__(
            f"leader {leader} objective has a kink in {variable} "
            f"(one-sided slopes {backward:.6g} and {forward:.6g})"
        )
        self.leader = leader
        self.variable = variable


class FollowerTrackingLost(QuasiEquilibriaError):
    def __init__(self, leader: int, tau: float, distance: float) -> None:
        super().__init__(
            f"leader {leader}: nearest follower solution at step {tau:g} is {distance:.3e} away"
        )
        self.leader = leader
        self.tau = tau
        self.distance = distance


class UsageError(QuasiEquilibriaError):
    pass
