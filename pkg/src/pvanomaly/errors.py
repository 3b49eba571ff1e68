"""Exception and warning types raised across the toolkit."""

from __future__ import annotations


class PvAnomalyError(Exception):
    """Base class for all toolkit errors."""


# -- ingestion / frames ------------------------------------------------------

class MissingChannel(PvAnomalyError, KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing channel {self.name!r}"


class NonUniformSampling(PvAnomalyError, ValueError):
    def __init__(self, gap: int, row: int) -> None:
        super().__init__(f"non-uniform sampling: gap of {gap}s before row {row}")
        self.gap = gap
        self.row = row


class NonFiniteValue(PvAnomalyError, ValueError):
    def __init__(self, row: int, channel: str) -> None:
        super().__init__(f"non-finite value in row {row}, channel {channel!r}")
        self.row = row
        self.channel = channel


class EmptyFrame(PvAnomalyError, ValueError):
    pass


class FrameTooShort(PvAnomalyError, ValueError):
    pass


class LengthMismatch(PvAnomalyError, ValueError):
    pass


class DimensionMismatch(PvAnomalyError, ValueError):
    pass


class TooFewSamples(PvAnomalyError, ValueError):
    pass


# -- simulation / attacks ----------------------------------------------------

class ZeroPeakLoad(PvAnomalyError, ValueError):
    pass


class PowerFlowDivergence(PvAnomalyError, RuntimeError):
    pass


class InvalidPowerFactor(PvAnomalyError, ValueError):
    pass


class InvalidFactor(PvAnomalyError, ValueError):
    pass


class IntervalOutOfRange(PvAnomalyError, ValueError):
    pass


# -- detectors ---------------------------------------------------------------

class NonConvergence(PvAnomalyError, RuntimeError):
    pass


class NonFiniteLoss(PvAnomalyError, RuntimeError):
    pass


class DegenerateSubsample(PvAnomalyError, ValueError):
    pass


class DegenerateLabels(PvAnomalyError, ValueError):
    pass


class SchemaMismatch(PvAnomalyError, ValueError):
    """A serialized model does not match the expected version or channels."""


# -- fusion / evaluation -----------------------------------------------------

class OrientationMismatch(PvAnomalyError, ValueError):
    pass


class MixedOrientation(PvAnomalyError, ValueError):
    pass


class SingleClassLabels(PvAnomalyError, ValueError):
    pass


class AllZeroCounts(PvAnomalyError, ValueError):
    pass


# -- warnings ----------------------------------------------------------------

class RankDeficientWarning(UserWarning):
    pass


class DegenerateHullWarning(UserWarning):
    pass


class ZeroMaxWarning(UserWarning):
    pass


class ZeroWeightsWarning(UserWarning):
    pass
