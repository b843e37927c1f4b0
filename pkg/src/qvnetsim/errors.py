"""Exception types and denial reasons shared across the package.

A denied key request is a normal outcome, not an exception, so denials
travel as :class:`DenialReason` values.  Exceptions are reserved for
malformed inputs and broken preconditions.
"""

from __future__ import annotations

from enum import Enum


class QvnetError(Exception):
    """Base class for every error raised by this package."""


class UnknownNodeError(QvnetError):
    """A node name was referenced that the graph does not contain."""


class DuplicateLinkError(QvnetError):
    """Two links were declared for the same unordered node pair."""


class SelfLoopError(QvnetError):
    """A link had both endpoints on the same node."""


class NegativeRateError(QvnetError):
    """A key rate below zero was supplied."""


class NonMonotonicTickError(QvnetError):
    """Key generation was asked to run for a tick that already passed."""


class InsufficientKeysError(QvnetError):
    """A relay needed a key block on a link whose vault is empty."""

    def __init__(self, link: tuple[str, str], message: str | None = None):
        self.link = link
        super().__init__(message or f"no available key block on link {link[0]}-{link[1]}")


class NoPathError(QvnetError):
    """No usable path exists between the requested endpoints."""

    def __init__(self, message: str, pair: tuple[str, str] | None = None):
        self.pair = pair
        super().__init__(message)


class InvalidQuotaError(QvnetError):
    """A quota fraction fell outside [0, 1]."""


class EmptySubconnSetError(QvnetError):
    """A trunk split was requested with no sub-connections."""


class UnknownSubConnectionError(QvnetError):
    """A demand referenced a sub-connection the trunk does not carry."""


class QVNetNotFoundError(QvnetError):
    """A request named a QVNet id the key service does not know."""


class MissingStaticRouteError(QvnetError):
    """Static routing was configured but has no entry for the pair."""


class EmptyQVNetError(QvnetError):
    """An allocation was requested for a QVNet with no links."""


class NumericalFailureError(QvnetError):
    """The solver exceeded its iteration budget without converging."""


class LpUnboundedError(QvnetError):
    """The linear program has no finite optimum."""


class InvalidRuleError(QvnetError):
    """An update rule violated its own consistency constraints."""


class ParseError(QvnetError):
    """A scenario document is not well-formed."""


class ValidationError(QvnetError):
    """A scenario document is well-formed but semantically invalid.

    Carries every problem found, not just the first.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DenialReason(Enum):
    """Why a key request was (partly or fully) denied."""

    ACCESS_DENIED = "access"
    QUOTA_EXCEEDED = "quota"
    SCHEDULE_CLOSED = "schedule"
    NO_PATH = "nopath"
    INSUFFICIENT_KEYS = "insufficient"
