"""Exception hierarchy shared by every module."""


class NeutralInclusionError(Exception):
    """Base class for all errors raised by the package."""


class NonFiniteInput(NeutralInclusionError, ValueError):
    pass


class DegenerateAxes(NeutralInclusionError, ValueError):
    pass


class DegenerateCoordinates(NeutralInclusionError, ValueError):
    """Point lies on the focal set where two confocal coordinates merge."""


class SubdivisionTooLarge(NeutralInclusionError, ValueError):
    pass


class InvalidMesh(NeutralInclusionError, ValueError):
    pass


class ConvergenceFailure(NeutralInclusionError, ArithmeticError):
    pass


class StencilLeavesShell(NeutralInclusionError, ValueError):
    pass


class SingularInterfaceSystem(NeutralInclusionError, ArithmeticError):
    pass


class NoPositiveRoot(NeutralInclusionError, ValueError):
    pass


class NeutralityVacuous(NeutralInclusionError, ValueError):
    """Raised when sigma_c == sigma_s, so the core is invisible."""


class AssumptionViolated(NeutralInclusionError, ValueError):
    pass


class EvaluationOutsideDomain(NeutralInclusionError, ValueError):
    pass


class RankDeficient(NeutralInclusionError, ArithmeticError):
    def __init__(self, message: str, rank: int):
        super().__init__(f"{message} (achieved rank {rank})")
        self.rank = rank


class SourceSurfaceIntersectsShell(NeutralInclusionError, ValueError):
    pass


class DisconnectedShell(NeutralInclusionError, ValueError):
    pass


class InsufficientRadii(NeutralInclusionError, ValueError):
    pass


class SingularPoint(NeutralInclusionError, ValueError):
    pass


class SeedRequired(NeutralInclusionError, ValueError):
    pass


class IllConditionedFit(NeutralInclusionError, ArithmeticError):
    pass


class ContrastSingular(NeutralInclusionError, ValueError):
    pass


class MeshesIntersect(NeutralInclusionError, ValueError):
    pass


class SchemaError(NeutralInclusionError, ValueError):
    pass
