"""Rate allocation per QVNet behavior, posed as a path-flow linear program.

Commodities are node pairs.  Each commodity's rate is the sum of flows
over its simple paths; physical links cap the sum of all flows crossing
them, and a logical QVLink on a commodity's exact pair caps that rate.
Balanced and broadcast maximize the common minimum rate; high throughput
maximizes a single pair's rate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .errors import EmptyQVNetError, NoPathError
from .qvnet import Behavior, BehaviorKind, QVNet
from .simplex import solve_lp_max
from .topology import (
    DEFAULT_MAX_HOPS,
    NetworkGraph,
    NodePair,
    Path,
    PhysicalLink,
    enumerate_paths,
    link_pair,
)
from .virtlink import TrunkKind


@dataclass(frozen=True)
class LpInstance:
    """A fully enumerated path-flow program, ready to solve."""

    behavior: Behavior
    commodities: tuple[NodePair, ...]
    paths: Mapping[NodePair, tuple[Path, ...]]
    capacities: Mapping[NodePair, Fraction]
    rate_caps: Mapping[NodePair, Fraction]

    @property
    def maximizes_common_minimum(self) -> bool:
        return self.behavior.kind in (BehaviorKind.BALANCED, BehaviorKind.BROADCAST)


@dataclass(frozen=True)
class Allocation:
    """Solver output: per-pair rates, their path decomposition, the optimum."""

    rates: Mapping[NodePair, Fraction]
    path_flows: Mapping[NodePair, tuple[tuple[Path, Fraction], ...]]
    objective: Fraction


def behavior_commodities(behavior: Behavior, members: Sequence[str]) -> tuple[NodePair, ...]:
    """The node pairs a behavior promises to serve, in canonical order."""
    ordered = sorted(members)
    if behavior.kind is BehaviorKind.BALANCED:
        return tuple(itertools.combinations(ordered, 2))
    if behavior.kind is BehaviorKind.BROADCAST:
        hub = behavior.hub
        return tuple(sorted(link_pair(hub, other) for other in ordered if other != hub))
    return (behavior.pair,)


def qvnet_capacities(qvnet: QVNet) -> dict[NodePair, Fraction]:
    """Per-link capacity available to this QVNet: its physical QVLink rates."""
    return {
        qv.pair: qv.rate
        for qv in qvnet.qvlinks
        if qv.kind is TrunkKind.PHYSICAL
    }


def build_lp(
    qvnet: QVNet,
    behavior: Behavior | None = None,
    capacities: Mapping[NodePair, Fraction] | None = None,
    max_hops: int = DEFAULT_MAX_HOPS,
) -> LpInstance:
    """Pose the allocation problem for a QVNet.

    behavior defaults to the QVNet's own; capacities default to the
    QVNet's physical link rates but may be overridden, e.g. to plan
    against raw trunk rates.  Raises EmptyQVNetError when there are no
    links and NoPathError when some commodity cannot be routed.
    """
    if qvnet.is_empty:
        raise EmptyQVNetError(f"QVNet {qvnet.id!r} has no links")
    behavior = behavior or qvnet.behavior
    members = qvnet.member_nodes
    if capacities is None:
        capacities = qvnet_capacities(qvnet)
    else:
        capacities = {link_pair(*p): Fraction(r) for p, r in capacities.items()}
        missing = [p for p in qvnet.physical_pairs if p not in capacities]
        if missing:
            raise ValueError(f"capacity override missing links {sorted(missing)}")

    graph = NetworkGraph(
        nodes=members,
        links=tuple(
            PhysicalLink(pair=pair, rate=capacities[pair])
            for pair in sorted(qvnet.physical_pairs)
        ),
    )

    commodities = behavior_commodities(behavior, members)
    paths: dict[NodePair, tuple[Path, ...]] = {}
    for pair in commodities:
        options = enumerate_paths(graph, pair[0], pair[1], max_hops=max_hops)
        if not options:
            raise NoPathError(
                f"QVNet {qvnet.id!r} cannot route {pair[0]}-{pair[1]}", pair=pair
            )
        paths[pair] = tuple(options)

    rate_caps: dict[NodePair, Fraction] = {}
    for pair in commodities:
        cap = qvnet.rate_cap(pair)
        if cap is not None:
            rate_caps[pair] = cap

    return LpInstance(
        behavior=behavior,
        commodities=commodities,
        paths=paths,
        capacities={p: Fraction(capacities[p]) for p in sorted(qvnet.physical_pairs)},
        rate_caps=rate_caps,
    )


def _variable_layout(lp: LpInstance) -> list[tuple[NodePair, Path]]:
    layout = []
    for pair in lp.commodities:
        for path in lp.paths[pair]:
            layout.append((pair, path))
    return layout


def solve_behavior(lp: LpInstance, exact: bool = True) -> Allocation:
    """Solve the posed program and decompose the result by commodity."""
    layout = _variable_layout(lp)
    n_flows = len(layout)
    has_common = lp.maximizes_common_minimum
    n_vars = n_flows + (1 if has_common else 0)

    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []

    for link in sorted(lp.capacities):
        row = [Fraction(0)] * n_vars
        for idx, (_, path) in enumerate(layout):
            if link in path.hops:
                row[idx] = Fraction(1)
        rows.append(row)
        rhs.append(lp.capacities[link])

    for pair in sorted(lp.rate_caps):
        row = [Fraction(0)] * n_vars
        for idx, (commodity, _) in enumerate(layout):
            if commodity == pair:
                row[idx] = Fraction(1)
        rows.append(row)
        rhs.append(lp.rate_caps[pair])

    objective = [Fraction(0)] * n_vars
    if has_common:
        # t <= rate(commodity) for every commodity; maximize t
        for pair in lp.commodities:
            row = [Fraction(0)] * n_vars
            for idx, (commodity, _) in enumerate(layout):
                if commodity == pair:
                    row[idx] = Fraction(-1)
            row[n_flows] = Fraction(1)
            rows.append(row)
            rhs.append(Fraction(0))
        objective[n_flows] = Fraction(1)
    else:
        for idx, (commodity, _) in enumerate(layout):
            if commodity == lp.commodities[0]:
                objective[idx] = Fraction(1)

    optimum, values = solve_lp_max(objective, rows, rhs, exact=exact)
    if not exact:
        optimum = Fraction(optimum)
        values = [Fraction(v) for v in values]

    flows: dict[NodePair, list[tuple[Path, Fraction]]] = {
        pair: [] for pair in lp.commodities
    }
    for idx, (pair, path) in enumerate(layout):
        flows[pair].append((path, values[idx]))

    rates = {
        pair: sum((flow for _, flow in flows[pair]), Fraction(0))
        for pair in lp.commodities
    }
    return Allocation(
        rates=rates,
        path_flows={pair: tuple(flows[pair]) for pair in lp.commodities},
        objective=optimum,
    )


def verify_allocation(
    allocation: Allocation,
    lp: LpInstance,
    tolerance: Fraction = Fraction(0),
) -> list[str]:
    """Recheck an allocation against the program it claims to solve.

    Pure recomputation from first principles; returns a list of
    violation descriptions, empty when the allocation is feasible and
    internally consistent.  The default tolerance is exact.
    """
    problems: list[str] = []
    tolerance = Fraction(tolerance)

    for pair in lp.commodities:
        if pair not in allocation.path_flows:
            problems.append(f"missing flows for commodity {pair}")
            continue
        for path, flow in allocation.path_flows[pair]:
            if flow < -tolerance:
                problems.append(f"negative flow {flow} on {path.nodes}")
            if path.endpoints != pair:
                problems.append(f"path {path.nodes} does not serve {pair}")

    loads: dict[NodePair, Fraction] = {link: Fraction(0) for link in lp.capacities}
    for pair in lp.commodities:
        for path, flow in allocation.path_flows.get(pair, ()):
            for hop in path.hops:
                if hop not in loads:
                    problems.append(f"path {path.nodes} crosses unknown link {hop}")
                    continue
                loads[hop] += flow
    for link, load in loads.items():
        if load > lp.capacities[link] + tolerance:
            problems.append(
                f"link {link} overloaded: {load} > {lp.capacities[link]}"
            )

    for pair in lp.commodities:
        declared = allocation.rates.get(pair)
        if declared is None:
            problems.append(f"missing rate for commodity {pair}")
            continue
        recomputed = sum(
            (flow for _, flow in allocation.path_flows.get(pair, ())), Fraction(0)
        )
        if abs(declared - recomputed) > tolerance:
            problems.append(
                f"rate for {pair} is {declared} but flows sum to {recomputed}"
            )

    for pair, cap in lp.rate_caps.items():
        rate = allocation.rates.get(pair, Fraction(0))
        if rate > cap + tolerance:
            problems.append(f"rate cap broken on {pair}: {rate} > {cap}")

    if lp.maximizes_common_minimum:
        floor = min(allocation.rates[p] for p in lp.commodities)
        if allocation.objective > floor + tolerance:
            problems.append(
                f"objective {allocation.objective} exceeds minimum rate {floor}"
            )
    else:
        single = allocation.rates.get(lp.commodities[0], Fraction(0))
        if abs(allocation.objective - single) > tolerance:
            problems.append(
                f"objective {allocation.objective} differs from pair rate {single}"
            )

    return problems
