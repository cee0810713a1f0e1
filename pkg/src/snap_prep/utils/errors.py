"""Exception hierarchy shared by the library and the CLI.

The CLI maps these onto exit codes: configuration problems exit with 2,
synthesis failures with 3 and numerical failures with 4.
"""

from __future__ import annotations

from typing import Any


class SnapPrepError(Exception):
    """Base class for all errors raised by snap_prep."""

    exit_code: int = 1


class ConfigError(SnapPrepError):
    exit_code = 2


class InvalidArgumentError(SnapPrepError, ValueError):
    exit_code = 2


class DegenerateInputError(SnapPrepError, ValueError):
    exit_code = 2


class TruncationError(SnapPrepError):
    """Raised when a state leaks out of the truncated Fock space."""

    exit_code = 4

    def __init__(self, message: str, leaked_weight: float) -> None:
        super().__init__(message)
        self.leaked_weight = leaked_weight


class SynthesisFailureError(SnapPrepError):
    """Raised when an optimizer misses its acceptance threshold.

    The best-effort artifact is attached as ``result`` so callers can still
    inspect or persist it.
    """

    exit_code = 3

    def __init__(self, message: str, result: Any) -> None:
        super().__init__(message)
        self.result = result


class NumericalFailureError(SnapPrepError):
    exit_code = 4


class IntegratorFailureError(NumericalFailureError):
    pass


class ReconstructionError(NumericalFailureError):
    pass
