"""Exception hierarchy.

Validation errors map to CLI exit code 2, numerical failures to exit code 3.
"""


class HKFrameError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ValidationError(HKFrameError):
    exit_code = 2


class NumericalError(HKFrameError):
    exit_code = 3


class TriangleInequalityViolation(ValidationError):
    def __init__(self, triple, excess):
        self.triple = tuple(triple)
        self.excess = float(excess)
        x, y, z = self.triple
        super().__init__(
            f"triangle inequality fails: rho({x},{z}) exceeds rho({x},{y}) + rho({y},{z}) by {excess:.3g}"
        )


class NonpositiveMeasure(ValidationError):
    pass


class AsymmetricDistance(ValidationError):
    pass


class UnknownPoint(ValidationError):
    pass


class InvalidDelta(ValidationError):
    pass


class NotSelfAdjoint(ValidationError):
    def __init__(self, asymmetry):
        self.asymmetry = float(asymmetry)
        super().__init__(f"operator is not self-adjoint in the weighted inner product (asymmetry {asymmetry:.3g})")


class NegativeSpectrum(ValidationError):
    def __init__(self, smallest):
        self.smallest = float(smallest)
        super().__init__(f"operator has a negative eigenvalue {smallest:.3g} beyond tolerance")


class DivisionByZeroBall(NumericalError):
    pass


class DegenerateLowerBound(NumericalError):
    pass


class InvalidParams(ValidationError):
    pass


class InvalidM(ValidationError):
    pass


class NeumannDivergence(NumericalError):
    def __init__(self, level, norm):
        self.level = int(level)
        self.norm = float(norm)
        super().__init__(f"Neumann series diverges at level {level}: ||R_j|| = {norm:.4g} >= 1")


class IndexMismatch(ValidationError):
    pass


class LevelTooCoarse(ValidationError):
    pass


class InfeasibleMoments(NumericalError):
    pass


class PrerequisiteMissing(ValidationError):
    pass


class HypothesisViolation(ValidationError):
    """A hypothesis required by an equivalence claim does not hold."""


class InvalidSize(ValidationError):
    pass


class HashMismatch(ValidationError):
    pass


class StageError(HKFrameError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"[{stage}] {cause}")
