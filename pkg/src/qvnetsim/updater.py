"""Demand observation and periodic trunk quota rebalancing.

The updater watches the request ledger, keeps exponentially weighted
moving averages of demand per (trunk, sub-connection), and periodically
recomputes quota maps: contractual floors first, then the remainder
split proportionally to demand, capped by per-sub-connection ceilings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import InvalidRuleError, NonMonotonicTickError
from .kms import LedgerEntry
from .topology import NodePair
from .virtlink import TrunkLink

SeriesKey = tuple[NodePair, str]


@dataclass(frozen=True)
class UpdateRule:
    """Rebalance configuration: cadence, smoothing, and per-id bounds.

    Ids missing from floors default to 0; missing from ceilings default
    to 1.  alpha is the EWMA weight of the newest observation.
    """

    period: int
    alpha: Fraction = Fraction(1, 2)
    floors: Mapping[str, Fraction] = field(default_factory=dict)
    ceilings: Mapping[str, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "floors", {k: Fraction(v) for k, v in self.floors.items()}
        )
        object.__setattr__(
            self, "ceilings", {k: Fraction(v) for k, v in self.ceilings.items()}
        )

    def validate(self) -> None:
        if self.period < 1:
            raise InvalidRuleError(f"period must be >= 1, got {self.period}")
        if not 0 < Fraction(self.alpha) <= 1:
            raise InvalidRuleError(f"alpha must be in (0, 1], got {self.alpha}")
        names = set(self.floors) | set(self.ceilings)
        for name in names:
            lo = self.floor(name)
            hi = self.ceiling(name)
            if not 0 <= lo <= hi <= 1:
                raise InvalidRuleError(
                    f"bounds for {name!r} must satisfy 0 <= floor <= "
                    f"ceiling <= 1, got [{lo}, {hi}]"
                )
        if sum(self.floors.values(), Fraction(0)) > 1:
            raise InvalidRuleError("floors sum past 1; no split can honor them")

    def floor(self, name: str) -> Fraction:
        return self.floors.get(name, Fraction(0))

    def ceiling(self, name: str) -> Fraction:
        return self.ceilings.get(name, Fraction(1))


@dataclass
class DemandStats:
    """EWMA demand series per (trunk pair, sub-connection)."""

    alpha: Fraction
    requested_ewma: dict[SeriesKey, Fraction] = field(default_factory=dict)
    granted_ewma: dict[SeriesKey, Fraction] = field(default_factory=dict)
    last_tick: int | None = None

    @classmethod
    def from_trunks(cls, trunks: Iterable[TrunkLink], alpha: Fraction) -> "DemandStats":
        stats = cls(alpha=Fraction(alpha))
        for trunk in trunks:
            for name in trunk.subconn_ids:
                stats.requested_ewma[(trunk.pair, name)] = Fraction(0)
                stats.granted_ewma[(trunk.pair, name)] = Fraction(0)
        return stats

    def observe(self, tick: int, entries: Iterable[LedgerEntry]) -> None:
        """Fold one tick of ledger entries into the averages.

        Requested demand lands on every trunk along each request's
        route; granted demand on the trunks actually charged.  Requests
        denied before routing carry no trunk information and are
        invisible here.  Quiet series decay toward zero.
        """
        if self.last_tick is not None and tick <= self.last_tick:
            raise NonMonotonicTickError(
                f"tick {tick} is not after tick {self.last_tick}"
            )
        self.last_tick = tick

        requested: dict[SeriesKey, int] = {}
        granted: dict[SeriesKey, int] = {}
        for entry in entries:
            if entry.tick != tick:
                raise ValueError(
                    f"entry from tick {entry.tick} in observation for {tick}"
                )
            for pair in entry.route_trunks:
                key = (pair, entry.qvnet_id)
                requested[key] = requested.get(key, 0) + entry.requested
            for pair, count in entry.trunk_charges:
                key = (pair, entry.qvnet_id)
                granted[key] = granted.get(key, 0) + count

        alpha = self.alpha
        keys = set(self.requested_ewma) | set(requested) | set(granted)
        for key in keys:
            self.requested_ewma[key] = alpha * requested.get(key, 0) + (
                1 - alpha
            ) * self.requested_ewma.get(key, Fraction(0))
            self.granted_ewma[key] = alpha * granted.get(key, 0) + (
                1 - alpha
            ) * self.granted_ewma.get(key, Fraction(0))


def rebalance(
    trunk: TrunkLink,
    stats: DemandStats,
    rule: UpdateRule,
) -> dict[str, Fraction]:
    """Recompute one trunk's quota map from observed demand.

    Every sub-connection keeps its floor.  The slack above the floors is
    split in proportion to requested-demand EWMAs, respecting ceilings;
    capacity freed by a binding ceiling flows to the others.  With no
    observed demand anywhere the current map is returned unchanged.
    """
    rule.validate()
    names = trunk.subconn_ids
    floors = {name: rule.floor(name) for name in names}
    floor_sum = sum(floors.values(), Fraction(0))
    if floor_sum > 1:
        raise InvalidRuleError(
            f"floors for trunk {trunk.pair} sum to {floor_sum} > 1"
        )
    for name in names:
        if rule.floor(name) > rule.ceiling(name):
            raise InvalidRuleError(f"floor above ceiling for {name!r}")

    demand = {
        name: stats.requested_ewma.get((trunk.pair, name), Fraction(0))
        for name in names
    }
    if all(value == 0 for value in demand.values()):
        return dict(trunk.quotas)

    headroom = {name: rule.ceiling(name) - floors[name] for name in names}
    extra = _capped_proportional(demand, headroom, Fraction(1) - floor_sum)
    return {name: floors[name] + extra[name] for name in names}


def _capped_proportional(
    demand: Mapping[str, Fraction],
    caps: Mapping[str, Fraction],
    budget: Fraction,
) -> dict[str, Fraction]:
    """Split budget proportionally to demand, never past a cap.

    Iteratively pins members whose proportional share exceeds their cap
    and re-divides the rest; with no binding cap this is plain
    proportionality.
    """
    shares = {name: Fraction(0) for name in demand}
    active = {name for name in demand if demand[name] > 0 and caps[name] > 0}
    remaining = budget
    while active and remaining > 0:
        weight = sum((demand[name] for name in active), Fraction(0))
        tentative = {name: remaining * demand[name] / weight for name in active}
        over = {name for name in active if tentative[name] > caps[name]}
        if not over:
            for name in active:
                shares[name] = tentative[name]
            break
        for name in over:
            shares[name] = caps[name]
            remaining -= caps[name]
            active.discard(name)
    return shares
