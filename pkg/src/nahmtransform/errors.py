"""Exception hierarchy shared by all modules."""


class NahmError(Exception):
    """Base class for every failure raised by the package."""


# type / framing
class TypeValidationError(NahmError, ValueError):
    """A symmetry breaking type violates one of its defining conditions."""

    condition = "invalid"


class NotTraceFree(TypeValidationError):
    condition = "NotTraceFree"


class NotSorted(TypeValidationError):
    condition = "NotSorted"


class BoundViolated(TypeValidationError):
    condition = "BoundViolated"


class EndSignViolated(TypeValidationError):
    condition = "EndSignViolated"


class NonzeroTerminal(TypeValidationError):
    condition = "NonzeroTerminal"


class DimensionMismatch(NahmError, ValueError):
    pass


class NotUnitary(NahmError, ValueError):
    pass


# Nahm data
class FamilyInapplicable(NahmError, ValueError):
    pass


class SampleOutOfRange(NahmError, ValueError):
    pass


class BlowupDetected(NahmError, RuntimeError):
    pass


class RankDeficient(NahmError, ValueError):
    pass


class ChernMismatch(NahmError, ValueError):
    pass


# Dirac-Nahm solver
class DegenerateLeadingMatrix(NahmError, RuntimeError):
    pass


class StepFailure(NahmError, RuntimeError):
    pass


class ConditioningOverflow(NahmError, RuntimeError):
    pass


class CountMismatch(NahmError, RuntimeError):
    pass


class WrongFiberDimension(NahmError, RuntimeError):
    pass


class SurjectivityFailure(NahmError, RuntimeError):
    pass


class GridMismatch(NahmError, ValueError):
    pass


# fields
class SolveFailure(NahmError, RuntimeError):
    pass


class AlignmentDegenerate(NahmError, RuntimeError):
    pass


# asymptotics / reductions
class FitIllConditioned(NahmError, ValueError):
    pass


class TypeNotSymmetric(NahmError, ValueError):
    pass


class OddRank(NahmError, ValueError):
    pass


# cli
class ConfigParse(NahmError, ValueError):
    pass
