"""Exception hierarchy shared by all modules.

Every error carries a ``stage`` label so the CLI can name the failing step and
map it onto an exit code.
"""

from __future__ import annotations


class PoseDiffError(Exception):
    """Base class for all package errors."""

    exit_code = 4
    stage = "core"


class DegenerateInput(PoseDiffError, ValueError):
    stage = "geometry"


class InvalidRotation(PoseDiffError, ValueError):
    stage = "geometry"


class EmptyInput(PoseDiffError, ValueError):
    stage = "geometry"


class EigenFailure(PoseDiffError, ArithmeticError):
    stage = "geometry"


class OutOfRange(PoseDiffError, ValueError):
    stage = "sde"


class NonFinite(PoseDiffError, ArithmeticError):
    stage = "net"


class Diverged(PoseDiffError, ArithmeticError):
    stage = "train"


class CheckpointError(PoseDiffError):
    stage = "checkpoint"
    exit_code = 3


class OdeStepUnderflow(PoseDiffError, ArithmeticError):
    stage = "sampler"

    def __init__(self, message: str, t: float | None = None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class EmptyAfterFilter(PoseDiffError, AssertionError):
    stage = "estimator"


class UnknownCategory(PoseDiffError, ValueError):
    stage = "synth"
    exit_code = 3


class InsufficientVisible(PoseDiffError):
    stage = "synth"


class DatasetError(PoseDiffError):
    stage = "data"
    exit_code = 3


class EmptyResults(PoseDiffError, ValueError):
    stage = "eval"


class DegenerateVariance(PoseDiffError, ValueError):
    stage = "eval"


class ConfigError(PoseDiffError):
    """Raised with the full list of violations, not just the first."""

    stage = "config"
    exit_code = 2

    def __init__(self, problems: list[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
