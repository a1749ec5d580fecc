"""Exception types shared across the package.

Two families: :class:`InputError` for data that violates a precondition
(the CLI maps these to exit code 2) and :class:`NumericalError` for
algorithms that fail to deliver (exit code 3).
"""


class CMCError(Exception):
    """Base class for every error raised by cmcloops."""

    exit_code = 3


class InputError(CMCError):
    exit_code = 2


class NumericalError(CMCError):
    exit_code = 3


# loops
class TwistingViolation(InputError):
    pass


class BadRadius(InputError):
    pass


class RadiusMismatch(InputError):
    pass


class EvalAtZero(InputError):
    pass


# factor
class NoConvergence(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


# dpw
class NonUnitaryFrame(NumericalError):
    pass


class ZeroMeanCurvature(InputError):
    pass


class BoundarySample(InputError):
    pass


# symmetry
class ConstraintViolation(InputError):
    pass


class SqrtBranchFailure(NumericalError):
    pass


class NonUnitary(NumericalError):
    pass


class GridTooSmall(InputError):
    pass


class FitIllConditioned(NumericalError):
    pass


# flows
class CorrectionPolynomialNotFound(NumericalError):
    pass


# curve
class OnUnitCircle(InputError):
    pass


class Duplicate(InputError):
    pass


class OutOfDisk(InputError):
    pass


class BranchTooClose(NumericalError):
    pass


class AmbiguousContinuation(NumericalError):
    pass


class CutsIntersect(InputError):
    pass


# periods
class SingularPeriodSystem(NumericalError):
    pass


class QuadratureFail(NumericalError):
    pass


class Inconsistent(NumericalError):
    pass


class PathBlocked(NumericalError):
    pass


class ModulusOutOfRange(InputError):
    pass


# construct
class MissingNu0(InputError):
    pass


class InadmissibleFTilde(InputError):
    pass


class RootPairingFailure(NumericalError):
    pass


class QNotAdmissible(InputError):
    pass


class RadiusCollapse(NumericalError):
    pass
