"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class ScenoError(Exception):
    """Base class for all toolkit errors."""


class ContractViolation(ScenoError):
    """An argument broke a documented precondition (bad dimension, range, shape)."""


class EvaluationError(ScenoError):
    """A black-box or trace evaluation produced an unusable value.

    Carries enough context (offending index, parameter vector, raw payload)
    for outlier triage and protocol debugging.
    """

    def __init__(self, message, *, index=None, theta=None, payload=None):
        super().__init__(message)
        self.index = index
        self.theta = theta
        self.payload = payload


class TrainingDiverged(ScenoError):
    """Surrogate training hit a non-finite loss."""


class ProtocolError(EvaluationError):
    """The subprocess wire protocol was violated (timeout, bad line, id mismatch)."""
