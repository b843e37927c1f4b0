"""Virtual networks assembled from same-id virtual links, plus their policy.

A QVNet is the subgraph formed by every QVLink that carries one
sub-connection id.  Policy lives here too: forwarding behavior, routing
choice, access rules, and schedule windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping

from .errors import DenialReason
from .keymat import RelayMode
from .topology import NetworkGraph, NodePair, Path, PhysicalLink, link_pair
from .virtlink import QVLink, TrunkKind, TrunkLink, split_trunk

WILDCARD_PAIRS = "*"


class BehaviorKind(Enum):
    BALANCED = "balanced"
    BROADCAST = "broadcast"
    HIGH_THROUGHPUT = "high_throughput"


@dataclass(frozen=True)
class Behavior:
    """Key forwarding goal for one QVNet.

    BALANCED serves every member pair at the best common rate.
    BROADCAST serves every pair touching the hub at the best common rate.
    HIGH_THROUGHPUT pushes one pair as fast as the links allow.
    """

    kind: BehaviorKind
    hub: str | None = None
    pair: NodePair | None = None

    def __post_init__(self) -> None:
        if self.kind is BehaviorKind.BROADCAST and not self.hub:
            raise ValueError("broadcast behavior needs a hub node")
        if self.kind is BehaviorKind.HIGH_THROUGHPUT:
            if self.pair is None:
                raise ValueError("high_throughput behavior needs a node pair")
            if self.pair[0] == self.pair[1]:
                raise ValueError("high_throughput pair endpoints must differ")
            object.__setattr__(self, "pair", link_pair(*self.pair))
        if self.kind is BehaviorKind.BALANCED and (self.hub or self.pair):
            raise ValueError("balanced behavior takes no hub or pair")


class RoutingKind(Enum):
    SHORTEST_PATH = "shortest_path"
    STATIC_MAP = "static_map"


@dataclass(frozen=True)
class RoutingPolicy:
    kind: RoutingKind = RoutingKind.SHORTEST_PATH
    static_routes: Mapping[NodePair, Path] = field(default_factory=dict)

    def __post_init__(self) -> None:
        routes = {link_pair(*pair): path for pair, path in self.static_routes.items()}
        for pair, path in routes.items():
            if path.endpoints != pair:
                raise ValueError(
                    f"static route for {pair} runs {path.nodes[0]} to "
                    f"{path.nodes[-1]}"
                )
        object.__setattr__(self, "static_routes", routes)


@dataclass(frozen=True)
class AccessRule:
    """Allows a principal some pairs with a per-tick block quota.

    allowed_pairs is either the wildcard "*" or a frozenset of pairs.
    """

    principal: str
    allowed_pairs: frozenset[NodePair] | str = WILDCARD_PAIRS
    max_blocks_per_tick: int = 0

    def __post_init__(self) -> None:
        if self.max_blocks_per_tick < 0:
            raise ValueError("max_blocks_per_tick must be nonnegative")
        if self.allowed_pairs != WILDCARD_PAIRS:
            object.__setattr__(
                self,
                "allowed_pairs",
                frozenset(link_pair(*p) for p in self.allowed_pairs),
            )

    def covers(self, pair: NodePair) -> bool:
        if self.allowed_pairs == WILDCARD_PAIRS:
            return True
        return pair in self.allowed_pairs


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: DenialReason | None = None


@dataclass(frozen=True)
class QVNet:
    """One virtual network: links sharing a sub-connection id, plus policy.

    An empty schedule means the QVNet is always open.
    """

    id: str
    qvlinks: tuple[QVLink, ...]
    behavior: Behavior = Behavior(kind=BehaviorKind.BALANCED)
    routing: RoutingPolicy = RoutingPolicy()
    access: tuple[AccessRule, ...] = ()
    schedule: tuple[tuple[int, int], ...] = ()
    relay_mode: RelayMode = RelayMode.HOP_BY_HOP

    def __post_init__(self) -> None:
        for qv in self.qvlinks:
            if qv.subconn != self.id:
                raise ValueError(
                    f"QVLink for {qv.subconn!r} cannot join QVNet {self.id!r}"
                )
        for start, stop in self.schedule:
            if start >= stop:
                raise ValueError(f"schedule window [{start}, {stop}) is empty")
        members = self.member_nodes
        if self.behavior.kind is BehaviorKind.BROADCAST:
            if self.behavior.hub not in members:
                raise ValueError(
                    f"broadcast hub {self.behavior.hub!r} is not a member "
                    f"of QVNet {self.id!r}"
                )
        if self.behavior.kind is BehaviorKind.HIGH_THROUGHPUT:
            a, b = self.behavior.pair
            if a not in members or b not in members:
                raise ValueError(
                    f"high_throughput pair {self.behavior.pair} is not inside "
                    f"QVNet {self.id!r}"
                )
        physical = self.physical_pairs
        for pair, path in self.routing.static_routes.items():
            for hop in path.hops:
                if hop not in physical:
                    raise ValueError(
                        f"static route for {pair} uses link {hop} outside "
                        f"QVNet {self.id!r}"
                    )

    @property
    def is_empty(self) -> bool:
        return not self.qvlinks

    @cached_property
    def member_nodes(self) -> tuple[str, ...]:
        names = set()
        for qv in self.qvlinks:
            names.update(qv.pair)
        return tuple(sorted(names))

    @cached_property
    def physical_pairs(self) -> frozenset[NodePair]:
        return frozenset(
            qv.pair for qv in self.qvlinks if qv.kind is TrunkKind.PHYSICAL
        )

    @cached_property
    def routing_graph(self) -> NetworkGraph:
        """Member subgraph over physical QVLinks, used for routing."""
        links = tuple(
            PhysicalLink(pair=qv.pair, rate=qv.rate)
            for qv in sorted(
                (qv for qv in self.qvlinks if qv.kind is TrunkKind.PHYSICAL),
                key=lambda qv: qv.pair,
            )
        )
        return NetworkGraph(nodes=self.member_nodes, links=links)

    def rate_cap(self, pair: NodePair) -> Fraction | None:
        """End-to-end rate cap from a logical QVLink on this exact pair."""
        for qv in self.qvlinks:
            if qv.kind is TrunkKind.LOGICAL and qv.pair == pair:
                return qv.rate
        return None


def assemble_qvnet(trunks: Iterable[TrunkLink], subconn: str) -> QVNet:
    """Collect every trunk slice carrying one sub-connection id.

    Returns a QVNet with default policy; attach behavior and rules with
    dataclasses.replace.  A QVNet with no links is legal but flagged by
    is_empty.
    """
    qvlinks: list[QVLink] = []
    for trunk in sorted(trunks, key=lambda t: t.pair):
        if subconn in trunk.quotas:
            for qv in split_trunk(trunk).qvlinks:
                if qv.subconn == subconn:
                    qvlinks.append(qv)
    return QVNet(id=subconn, qvlinks=tuple(qvlinks))


def authorize(
    qvnet: QVNet,
    principal: str,
    pair: NodePair,
    count: int,
    tick: int,
    usage_this_tick: int = 0,
) -> Decision:
    """Pure access check: access rules, then per-tick quota, then schedule.

    Quota is all or nothing: a request that would push the principal past
    its per-tick ceiling is denied whole.  Checks run in a fixed order so
    a request failing several gates always reports the same reason.
    """
    pair = link_pair(*pair)
    matching = [
        rule
        for rule in qvnet.access
        if rule.principal == principal and rule.covers(pair)
    ]
    if not matching:
        return Decision(allowed=False, reason=DenialReason.ACCESS_DENIED)

    ceiling = max(rule.max_blocks_per_tick for rule in matching)
    if usage_this_tick + count > ceiling:
        return Decision(allowed=False, reason=DenialReason.QUOTA_EXCEEDED)

    if qvnet.schedule:
        open_now = any(start <= tick < stop for start, stop in qvnet.schedule)
        if not open_now:
            return Decision(allowed=False, reason=DenialReason.SCHEDULE_CLOSED)

    return Decision(allowed=True)
