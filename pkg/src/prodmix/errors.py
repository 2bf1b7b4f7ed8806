"""Exception types raised by the identification pipeline.

Every failure that the pipeline can recover from (by trying another row
triple) derives from :class:`IdentificationFailure` and carries a ``stage``
drawn from :data:`STAGES`.
"""

STAGES = ("selection", "hankel", "power", "linear-solve")


class IdentificationFailure(Exception):
    stage = "linear-solve"

    def __init__(self, message, value=None, stage=None):
        super().__init__(message)
        self.value = value
        if stage is not None:
            self.stage = stage


class SelectionFailure(IdentificationFailure):
    """Best family score fell below the selection threshold."""

    stage = "selection"

    @property
    def score(self):
        return self.value


class Exhausted(SelectionFailure):
    """No row triple passed selection (or every passing triple failed later)."""


class HankelGateFailure(IdentificationFailure):
    stage = "hankel"


class DegenerateHankel(IdentificationFailure):
    stage = "power"


class ComplexEigenvalue(IdentificationFailure):
    stage = "power"


class SingularC(IdentificationFailure):
    """A moment matrix C is numerically singular; ``which`` names it."""

    def __init__(self, message, value=None, which="C_BA"):
        super().__init__(message, value)
        self.which = which


class SingularVandermonde(IdentificationFailure):
    pass


class ZeroWeight(IdentificationFailure):
    pass


class SingularA(IdentificationFailure):
    pass


class SingularFamilyMatrix(IdentificationFailure):
    pass


class GroundOverlap(ValueError):
    """Two subset families (or a bit and a family) share ground elements."""


class CheckFailed(RuntimeError):
    """An a posteriori bound check failed and no fallback was available."""
