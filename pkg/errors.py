"""
Exception types shared by the asymflat modules.

Two families:
1. UsageError - bad input (malformed spec, point outside the metric's domain,
   inconsistent arguments). The CLI maps these to exit code 1.
2. NumericalFailure - a computation that did not reach its target (solver
   stalled, fit failed, eigensolver error). The CLI maps these to exit code 2
   and prints the failing stage.
"""
from typing import Optional


class AsymflatError(Exception):
    """Base class for every error raised by the lab."""


class UsageError(AsymflatError, ValueError):
    """Invalid input: malformed spec, out-of-domain point, bad argument."""


class NumericalFailure(AsymflatError, RuntimeError):
    """A numerical stage failed to meet its contract."""

    def __init__(self, stage: str, message: str, detail: Optional[dict] = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message
        self.detail = detail or {}
