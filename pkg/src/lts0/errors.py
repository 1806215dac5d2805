"""Exception hierarchy shared by every module."""

from __future__ import annotations


class Lts0Error(Exception):
    """Base class for all package errors."""


class NonConvergence(Lts0Error):
    """A dense factorization did not converge."""


class RankDeficient(Lts0Error):
    """A matrix that must have full column rank does not."""


class MarginViolation(Lts0Error):
    """An eigenvalue modulus lies within the unit-circle margin."""


class NotDiagonalizable(Lts0Error):
    """The eigenvector matrix is too ill-conditioned."""


class DimensionMismatch(Lts0Error):
    """Operand shapes do not conform."""


class SingularGain(Lts0Error):
    """The effective input gain cannot be inverted."""


class ZeroGap(Lts0Error):
    """Two diagonal blocks share an eigenvalue."""


class RankMismatch(Lts0Error):
    """Projector rank differs from the basis width."""


class DegenerateDraw(Lts0Error):
    """Random generation failed to produce a usable sample."""


class Overflow(Lts0Error):
    """A state norm exceeded the overflow guard.

    Attributes
    ----------
    step : int
        Time index of the first state above the guard.
    trajectory : object or None
        Partial trajectory recorded up to (not including) the blow-up.
    """

    def __init__(self, message: str, step: int, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


class NotNeeded(Lts0Error):
    """Packing was requested for a system with enough inputs."""


class IllConditioned(Lts0Error):
    """A data matrix is too ill-conditioned to use."""


class SearchExhausted(Lts0Error):
    """A parameter search hit its cap without success."""


class InfeasibleEpsilons(Lts0Error):
    """No epsilon triple satisfies the feasibility conditions."""


class TooLarge(Lts0Error):
    """Input is outside the size range of a combinatorial oracle."""


class ZeroState(Lts0Error):
    """A nonzero state was required."""


class IoError(Lts0Error):
    """Artifact emission failed."""


class EmptyInput(IoError):
    """Nothing to write."""


class StageError(Lts0Error):
    """Wraps an error raised inside a learner stage.

    Attributes
    ----------
    stage : str
        Stage name, e.g. ``"stage1"``.
    cause : Lts0Error
        The original error.
    """

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
