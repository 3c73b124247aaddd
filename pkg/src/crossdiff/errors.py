"""Exception hierarchy shared by the simulator modules."""

from __future__ import annotations


class CrossDiffError(Exception):
    """Base class for all package errors."""


class DomainError(CrossDiffError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(CrossDiffError, RuntimeError):
    """An iterative solver ran out of budget.

    ``residual`` holds the worst residual seen at exit.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class CertificateError(CrossDiffError):
    """A dominance margin needed for a lemma certificate is not positive."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class FalsificationError(CrossDiffError):
    """A sampled point violates a quadratic-form lower bound."""

    def __init__(self, message: str, witness: dict):
        super().__init__(message)
        self.witness = witness


class StepError(CrossDiffError, RuntimeError):
    """A time step could not be completed."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class EnsembleError(CrossDiffError, RuntimeError):
    """Every path of an ensemble was truncated."""


class ModelError(CrossDiffError):
    """A noise model produced non-finite values."""


class ConfigError(CrossDiffError, ValueError):
    """One or more configuration problems, each tagged with a line number."""

    def __init__(self, problems: list[tuple[int, str]]):
        self.problems = list(problems)
        lines = [f"line {ln}: {msg}" if ln else msg for ln, msg in self.problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
