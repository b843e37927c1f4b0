"""Key service: authorize, route, charge trunk budgets, relay, account.

One service instance fronts every QVNet in a deployment.  Requests are
served strictly in arrival order.  Partial grants are normal: a request
gets as many end-to-end blocks as every charged trunk can afford this
tick, and the shortfall is recorded with its reason.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import (
    DenialReason,
    MissingStaticRouteError,
    NoPathError,
    QVNetNotFoundError,
)
from .keymat import KeyVault, RelayTranscript
from .qvnet import QVNet, RoutingKind, assemble_qvnet, authorize
from .topology import NetworkGraph, NodePair, Path, link_pair
from .virtlink import TrunkKind, TrunkLink, resolve_contention

# A sub-connection may bank unused budget up to this many ticks of inflow.
BUDGET_CAP_TICKS = 4


@dataclass(frozen=True)
class KeyRequest:
    qvnet_id: str
    principal: str
    pair: NodePair
    count: int
    tick: int

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError("request count must be nonnegative")
        object.__setattr__(self, "pair", link_pair(*self.pair))


@dataclass(frozen=True)
class KeyGrant:
    request: KeyRequest
    granted: int
    transcripts: tuple[RelayTranscript, ...] = ()
    denial_reason: DenialReason | None = None

    @property
    def shortfall(self) -> int:
        return self.request.count - self.granted


@dataclass(frozen=True)
class LedgerEntry:
    """One request's full accounting trail."""

    tick: int
    qvnet_id: str
    principal: str
    pair: NodePair
    requested: int
    granted: int
    denial_reason: DenialReason | None
    path_nodes: tuple[str, ...] = ()
    route_trunks: tuple[NodePair, ...] = ()
    trunk_charges: tuple[tuple[NodePair, int], ...] = ()
    link_consumed: tuple[tuple[NodePair, int], ...] = ()


@dataclass(frozen=True)
class Totals:
    requested: int = 0
    granted: int = 0
    denied: Mapping[DenialReason, int] = field(default_factory=dict)
    physical_consumed: int = 0


@dataclass(frozen=True)
class LedgerView:
    """Aggregated ledger slice with stable (sorted) key order."""

    start: int
    stop: int
    per_qvnet: Mapping[str, Totals]
    per_principal: Mapping[str, Totals]


class KeyService:
    """Serves key requests across QVNets sharing one vault and trunk set."""

    def __init__(
        self,
        graph: NetworkGraph,
        vault: KeyVault,
        trunks: Iterable[TrunkLink],
        qvnets: Mapping[str, QVNet],
    ):
        self._graph = graph
        self._vault = vault
        self._trunks: dict[NodePair, TrunkLink] = {}
        for trunk in trunks:
            if trunk.pair in self._trunks:
                raise ValueError(f"two trunks declared for pair {trunk.pair}")
            self._trunks[trunk.pair] = trunk
        self._qvnets = dict(qvnets)
        self._budgets: dict[tuple[NodePair, str], Fraction] = {}
        for trunk in self._trunks.values():
            for name in trunk.subconn_ids:
                self._budgets[(trunk.pair, name)] = Fraction(0)
        self._usage: dict[tuple[str, str], int] = {}
        self.ledger: list[LedgerEntry] = []

    @property
    def trunks(self) -> dict[NodePair, TrunkLink]:
        return dict(self._trunks)

    @property
    def qvnets(self) -> dict[str, QVNet]:
        return dict(self._qvnets)

    def budget(self, pair: NodePair, subconn: str) -> Fraction:
        return self._budgets[(link_pair(*pair), subconn)]

    def begin_tick(self, tick: int) -> None:
        """Replenish per-sub-connection budgets and reset per-tick usage.

        Each sub-connection gains its QVLink rate, banked up to
        BUDGET_CAP_TICKS ticks worth of inflow.
        """
        for trunk in self._trunks.values():
            for name in trunk.subconn_ids:
                inflow = trunk.rate_for(name)
                key = (trunk.pair, name)
                balance = self._budgets.get(key, Fraction(0)) + inflow
                cap = BUDGET_CAP_TICKS * inflow
                self._budgets[key] = min(balance, cap)
        self._usage.clear()

    def apply_quotas(self, pair: NodePair, quotas: Mapping[str, Fraction]) -> None:
        """Install a rebalanced quota map on one trunk.

        Affected QVNets get fresh QVLink slices; their policy fields are
        kept.  Banked budget balances carry over and are clamped against
        the new caps at the next replenish.
        """
        pair = link_pair(*pair)
        trunk = self._trunks.get(pair)
        if trunk is None:
            raise NoPathError(f"no trunk for pair {pair}", pair=pair)
        touched = set(trunk.subconn_ids) | set(quotas)
        self._trunks[pair] = trunk.with_quotas(quotas)
        for name in sorted(touched):
            if name in self._qvnets:
                rebuilt = assemble_qvnet(self._trunks.values(), name)
                self._qvnets[name] = dataclasses.replace(
                    self._qvnets[name], qvlinks=rebuilt.qvlinks
                )
            self._budgets.setdefault((pair, name), Fraction(0))

    def route(self, qvnet: QVNet, pair: NodePair) -> Path:
        """Pick the path a request on this QVNet will consume keys along."""
        a, b = link_pair(*pair)
        if a == b:
            raise NoPathError(f"degenerate pair {a}-{b}", pair=(a, b))
        members = qvnet.member_nodes
        if a not in members or b not in members:
            raise NoPathError(
                f"{a}-{b} is not inside QVNet {qvnet.id!r}", pair=(a, b)
            )
        if qvnet.routing.kind is RoutingKind.STATIC_MAP:
            path = qvnet.routing.static_routes.get((a, b))
            if path is None:
                raise MissingStaticRouteError(
                    f"QVNet {qvnet.id!r} has no static route for {a}-{b}"
                )
            return path
        found = _shortest_path(qvnet.routing_graph, a, b)
        if found is None:
            raise NoPathError(
                f"QVNet {qvnet.id!r} cannot reach {b} from {a}", pair=(a, b)
            )
        return found

    def request_key(self, request: KeyRequest) -> KeyGrant:
        """Serve one request end to end.

        Pipeline: authorize, route, charge every trunk along the route,
        then relay the granted count.  Denials and shortfalls are
        ledger-recorded with a single reason each.
        """
        qvnet = self._qvnets.get(request.qvnet_id)
        if qvnet is None:
            raise QVNetNotFoundError(f"unknown QVNet {request.qvnet_id!r}")

        usage_key = (request.qvnet_id, request.principal)
        usage = self._usage.get(usage_key, 0)
        decision = authorize(
            qvnet,
            request.principal,
            request.pair,
            request.count,
            request.tick,
            usage_this_tick=usage,
        )
        if not decision.allowed:
            return self._deny(request, decision.reason)

        try:
            path = self.route(qvnet, request.pair)
        except (NoPathError, MissingStaticRouteError):
            return self._deny(request, DenialReason.NO_PATH)

        charged = self._charged_trunks(qvnet, request.pair, path)
        granted = request.count
        for trunk in charged:
            granted = min(granted, self._trunk_share(trunk, qvnet.id, request.count))
            if granted == 0:
                break

        if granted == 0 and request.count > 0:
            return self._deny(
                request,
                DenialReason.INSUFFICIENT_KEYS,
                path_nodes=path.nodes,
                route_trunks=tuple(t.pair for t in charged),
            )

        transcripts = tuple(
            self._vault.xor_relay(path, qvnet.relay_mode) for _ in range(granted)
        )
        if granted:
            for trunk in charged:
                self._budgets[(trunk.pair, qvnet.id)] -= granted
            self._usage[usage_key] = usage + granted

        reason = (
            DenialReason.INSUFFICIENT_KEYS if granted < request.count else None
        )
        entry = LedgerEntry(
            tick=request.tick,
            qvnet_id=request.qvnet_id,
            principal=request.principal,
            pair=request.pair,
            requested=request.count,
            granted=granted,
            denial_reason=reason,
            path_nodes=path.nodes,
            route_trunks=tuple(t.pair for t in charged),
            trunk_charges=tuple((t.pair, granted) for t in charged) if granted else (),
            link_consumed=tuple((hop, granted) for hop in path.hops) if granted else (),
        )
        self.ledger.append(entry)
        return KeyGrant(
            request=request,
            granted=granted,
            transcripts=transcripts,
            denial_reason=reason,
        )

    def _charged_trunks(
        self, qvnet: QVNet, pair: NodePair, path: Path
    ) -> list[TrunkLink]:
        """Physical trunks along the path, plus a logical trunk on the
        exact pair when one carries this QVNet."""
        charged = []
        for hop in path.hops:
            trunk = self._trunks.get(hop)
            if trunk is not None and qvnet.id in trunk.quotas:
                charged.append(trunk)
        logical = self._trunks.get(pair)
        if (
            logical is not None
            and logical.kind is TrunkKind.LOGICAL
            and qvnet.id in logical.quotas
            and pair not in path.hops
        ):
            charged.append(logical)
        return charged

    def _trunk_share(self, trunk: TrunkLink, subconn: str, want: int) -> int:
        """How many blocks one trunk affords this sub-connection now.

        Competing sub-connections are assumed greedy: each bids its whole
        remaining budget, so a grant here can never beat a rival's quota
        share even if the rival's request arrives later this tick.
        """
        own_budget = math.floor(self._budgets[(trunk.pair, subconn)])
        demands = {subconn: min(want, max(own_budget, 0))}
        for other in trunk.subconn_ids:
            if other == subconn:
                continue
            demands[other] = max(
                math.floor(self._budgets[(trunk.pair, other)]), 0
            )
        if trunk.kind is TrunkKind.PHYSICAL:
            available = self._vault.available_count(trunk.pair)
        else:
            available = sum(demands.values())
        shares = resolve_contention(trunk, demands, available)
        return shares[subconn]

    def _deny(
        self,
        request: KeyRequest,
        reason: DenialReason,
        path_nodes: tuple[str, ...] = (),
        route_trunks: tuple[NodePair, ...] = (),
    ) -> KeyGrant:
        self.ledger.append(
            LedgerEntry(
                tick=request.tick,
                qvnet_id=request.qvnet_id,
                principal=request.principal,
                pair=request.pair,
                requested=request.count,
                granted=0,
                denial_reason=reason,
                path_nodes=path_nodes,
                route_trunks=route_trunks,
            )
        )
        return KeyGrant(request=request, granted=0, denial_reason=reason)

    def ledger_report(self, start: int, stop: int) -> LedgerView:
        """Aggregate ledger entries with start <= tick < stop."""
        per_qvnet: dict[str, dict] = {}
        per_principal: dict[str, dict] = {}
        for entry in self.ledger:
            if not start <= entry.tick < stop:
                continue
            for bucket, key in (
                (per_qvnet, entry.qvnet_id),
                (per_principal, entry.principal),
            ):
                agg = bucket.setdefault(
                    key,
                    {"requested": 0, "granted": 0, "denied": {}, "consumed": 0},
                )
                agg["requested"] += entry.requested
                agg["granted"] += entry.granted
                if entry.denial_reason is not None:
                    missed = entry.requested - entry.granted
                    agg["denied"][entry.denial_reason] = (
                        agg["denied"].get(entry.denial_reason, 0) + missed
                    )
                agg["consumed"] += sum(count for _, count in entry.link_consumed)
        return LedgerView(
            start=start,
            stop=stop,
            per_qvnet={k: _totals(per_qvnet[k]) for k in sorted(per_qvnet)},
            per_principal={k: _totals(per_principal[k]) for k in sorted(per_principal)},
        )


def _totals(agg: dict) -> Totals:
    return Totals(
        requested=agg["requested"],
        granted=agg["granted"],
        denied=dict(sorted(agg["denied"].items(), key=lambda kv: kv[0].value)),
        physical_consumed=agg["consumed"],
    )


def _shortest_path(graph: NetworkGraph, src: str, dst: str) -> Path | None:
    """Fewest hops, lexicographically smallest node sequence among ties."""
    dist: dict[str, int] = {dst: 0}
    frontier = [dst]
    while frontier:
        nxt: list[str] = []
        for node in frontier:
            for neighbor in graph.neighbors(node):
                if neighbor not in dist:
                    dist[neighbor] = dist[node] + 1
                    nxt.append(neighbor)
        frontier = nxt
    if src not in dist:
        return None

    # Greedy forward walk: the smallest next node that still allows a
    # shortest completion yields the lexicographic minimum overall.
    nodes = [src]
    at = src
    while at != dst:
        at = min(
            neighbor
            for neighbor in graph.neighbors(at)
            if dist.get(neighbor) == dist[at] - 1
        )
        nodes.append(at)
    return Path(nodes=tuple(nodes))
