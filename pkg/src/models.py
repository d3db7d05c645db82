from enum import Enum


class ProblemFamily(str, Enum):
    SCALAR = "scalar"
    PERIODIC_LQR = "periodic-lqr"
    SCHLOGL = "schlogl"


class HorizonStatus(str, Enum):
    SOLVED = "solved"
    FAILED = "failed"


class VerdictStatus(str, Enum):
    PASSED = "passed"
    FAILED = "failed"
    SKIPPED = "skipped"


class StopReason(str, Enum):
    GRADIENT_TOLERANCE = "gradient_tolerance"
    STAGNATION = "stagnation"
    ITERATION_CAP = "iteration_cap"
    STEP_BLOWUP = "step_blowup"


class BBMode(str, Enum):
    BB1 = "bb1"
    BB2 = "bb2"

    def toggled(self) -> "BBMode":
        return BBMode.BB2 if self is BBMode.BB1 else BBMode.BB1
