"""Trunk links, quota splits into virtual links, and contention resolution.

A trunk carries the whole key rate of one node pair.  Splitting it hands
each sub-connection a fixed fraction of that rate; the fractions need not
sum to one, and oversubscription is legal and flagged rather than hidden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Mapping

from .errors import (
    EmptySubconnSetError,
    InvalidQuotaError,
    NegativeRateError,
    UnknownSubConnectionError,
)
from .topology import NodePair


class TrunkKind(Enum):
    PHYSICAL = "physical"
    LOGICAL = "logical"


@dataclass(frozen=True)
class TrunkLink:
    """One pair's full key channel plus its sub-connection quota map."""

    pair: NodePair
    kind: TrunkKind
    rate: Fraction
    quotas: Mapping[str, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise NegativeRateError(f"trunk {self.pair} has negative rate")
        clean: dict[str, Fraction] = {}
        for name in sorted(self.quotas):
            share = Fraction(self.quotas[name])
            if not 0 <= share <= 1:
                raise InvalidQuotaError(
                    f"quota for {name!r} on trunk {self.pair} is {share}, "
                    "outside [0, 1]"
                )
            clean[name] = share
        object.__setattr__(self, "quotas", clean)

    @property
    def subconn_ids(self) -> tuple[str, ...]:
        return tuple(self.quotas)

    @property
    def quota_sum(self) -> Fraction:
        return sum(self.quotas.values(), Fraction(0))

    @property
    def oversubscribed(self) -> bool:
        return self.quota_sum > 1

    def rate_for(self, subconn: str) -> Fraction:
        if subconn not in self.quotas:
            raise UnknownSubConnectionError(
                f"trunk {self.pair} does not carry {subconn!r}"
            )
        return self.quotas[subconn] * self.rate

    def with_quotas(self, quotas: Mapping[str, Fraction]) -> "TrunkLink":
        return replace(self, quotas=dict(quotas))


@dataclass(frozen=True)
class QVLink:
    """A virtual link: one sub-connection's slice of a trunk."""

    pair: NodePair
    subconn: str
    rate: Fraction
    kind: TrunkKind


@dataclass(frozen=True)
class SplitResult:
    qvlinks: tuple[QVLink, ...]
    oversubscribed: bool


def split_trunk(trunk: TrunkLink, quotas: Mapping[str, Fraction] | None = None) -> SplitResult:
    """Slice a trunk into one QVLink per sub-connection.

    Uses the trunk's own quota map unless an override is given.  Rates
    are exact: each QVLink gets quota times trunk rate as a Fraction.
    """
    source = trunk if quotas is None else trunk.with_quotas(quotas)
    if not source.quotas:
        raise EmptySubconnSetError(f"trunk {trunk.pair} has no sub-connections")
    qvlinks = tuple(
        QVLink(
            pair=source.pair,
            subconn=name,
            rate=share * source.rate,
            kind=source.kind,
        )
        for name, share in source.quotas.items()
    )
    return SplitResult(qvlinks=qvlinks, oversubscribed=source.oversubscribed)


def resolve_contention(
    trunk: TrunkLink,
    demands: Mapping[str, int],
    available: int,
) -> dict[str, int]:
    """Divide available blocks among competing sub-connections.

    Weighted max-min: water-fill with the quota fractions as weights,
    then round to whole blocks by largest remainder.  Grants never
    exceed demand, sum to min(available, total demand), and respect
    the quota ordering.  If every active weight is zero the division
    falls back to equal weights so capacity is still handed out.
    """
    unknown = sorted(set(demands) - set(trunk.quotas))
    if unknown:
        raise UnknownSubConnectionError(
            f"trunk {trunk.pair} does not carry {unknown}"
        )
    for name, count in demands.items():
        if not isinstance(count, int) or count < 0:
            raise ValueError(f"demand for {name!r} must be a nonnegative int")
    if available < 0:
        raise ValueError("available must be nonnegative")
    if not demands:
        return {}

    total = min(available, sum(demands.values()))
    weights = {name: trunk.quotas[name] for name in demands}
    shares = _water_fill(demands, weights, total)
    grants = _largest_remainder(shares, total)
    for name, count in demands.items():
        assert grants[name] <= count
    return {name: grants[name] for name in sorted(demands)}


def _water_fill(
    demands: Mapping[str, int],
    weights: Mapping[str, Fraction],
    total: int,
) -> dict[str, Fraction]:
    """Continuous weighted max-min shares, exact."""
    shares = {name: Fraction(0) for name in demands}
    remaining = Fraction(total)
    active = {name for name, want in demands.items() if want > 0}
    while remaining > 0 and active:
        weight_sum = sum((weights[name] for name in active), Fraction(0))
        if weight_sum > 0:
            effective = {name: weights[name] for name in active}
        else:
            effective = {name: Fraction(1) for name in active}
            weight_sum = Fraction(len(active))
        growers = [name for name in active if effective[name] > 0]
        step = remaining / weight_sum
        for name in growers:
            headroom = (demands[name] - shares[name]) / effective[name]
            if headroom < step:
                step = headroom
        for name in growers:
            shares[name] += effective[name] * step
        remaining -= step * weight_sum
        active = {name for name in active if shares[name] < demands[name]}
    return shares


def _largest_remainder(shares: Mapping[str, Fraction], total: int) -> dict[str, int]:
    """Round fractional shares to ints that sum to total exactly."""
    floors = {name: math.floor(value) for name, value in shares.items()}
    leftover = total - sum(floors.values())
    assert 0 <= leftover <= len(shares)
    order = sorted(shares, key=lambda name: (floors[name] - shares[name], name))
    grants = dict(floors)
    for name in order[:leftover]:
        grants[name] += 1
    return grants
