"""Scenario documents: the JSON schema, parsing, and whole-file validation.

A scenario bundles a physical graph, trunk quota maps, QVNet policies, a
request workload, and optionally an updater rule.  Validation is not
fail-fast: every problem in the document is collected and reported in
one ValidationError.

Rational values (rates, quotas, alpha) may be written as integers,
floats, or strings like "1/2" and "0.25".  Floats go through their
decimal text form, so 0.1 means exactly one tenth.

A workload entry fires either at one "tick" or at every tick of a
half-open "ticks": [start, stop) range.  Within a tick, requests run in
file order.
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any, Mapping

from .errors import ParseError, QvnetError, ValidationError
from .keymat import RelayMode
from .kms import KeyRequest
from .qvnet import (
    AccessRule,
    Behavior,
    BehaviorKind,
    QVNet,
    RoutingKind,
    RoutingPolicy,
    WILDCARD_PAIRS,
    assemble_qvnet,
)
from .topology import NetworkGraph, Path, build_graph, link_pair
from .updater import UpdateRule
from .virtlink import TrunkKind, TrunkLink

DEFAULT_WINDOW_SIZE = 100
MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class Scenario:
    """A fully validated simulation input."""

    name: str
    seed: int
    duration: int
    window_size: int
    graph: NetworkGraph
    trunks: tuple[TrunkLink, ...]
    qvnets: tuple[QVNet, ...]
    workload: tuple[KeyRequest, ...]
    updater: UpdateRule | None = None

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def qvnet_ids(self) -> tuple[str, ...]:
        return tuple(sorted(q.id for q in self.qvnets))


def load_scenario(path: str | pathlib.Path) -> Scenario:
    text = pathlib.Path(path).read_text(encoding="utf-8")
    return load_scenario_text(text)


def load_scenario_text(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a JSON object")
    return _build(doc)


def _build(doc: Mapping[str, Any]) -> Scenario:
    problems: list[str] = []

    name = doc.get("name", "scenario")
    if not isinstance(name, str) or not name:
        problems.append("name: must be a nonempty string")
        name = "scenario"

    duration = _int_field(doc, "duration", problems, required=True, minimum=0)
    seed = _int_field(doc, "seed", problems, default=0, minimum=0, maximum=MAX_SEED)
    window_size = _int_field(
        doc, "window_size", problems, default=DEFAULT_WINDOW_SIZE, minimum=1
    )

    graph = _build_graph_section(doc, problems)
    trunks = _build_trunks(doc, graph, problems) if graph is not None else None
    qvnets = (
        _build_qvnets(doc, graph, trunks, problems)
        if graph is not None and trunks is not None
        else None
    )
    workload = (
        _build_workload(doc, graph, qvnets, duration, problems)
        if graph is not None and qvnets is not None and duration is not None
        else None
    )
    updater = _build_updater(doc, trunks, problems) if trunks is not None else None

    known = {
        "name", "seed", "duration", "window_size",
        "nodes", "links", "trunks", "qvnets", "workload", "updater",
    }
    for key in doc:
        if key not in known:
            problems.append(f"unknown top-level field {key!r}")

    if problems:
        raise ValidationError(problems)

    return Scenario(
        name=name,
        seed=seed,
        duration=duration,
        window_size=window_size,
        graph=graph,
        trunks=tuple(trunks),
        qvnets=tuple(qvnets),
        workload=tuple(workload),
        updater=updater,
    )


def _int_field(
    doc: Mapping[str, Any],
    key: str,
    problems: list[str],
    required: bool = False,
    default: int | None = None,
    minimum: int | None = None,
    maximum: int | None = None,
) -> int | None:
    if key not in doc:
        if required:
            problems.append(f"{key}: required field is missing")
            return None
        return default
    value = doc[key]
    if not isinstance(value, int) or isinstance(value, bool):
        problems.append(f"{key}: must be an integer, got {value!r}")
        return None
    if minimum is not None and value < minimum:
        problems.append(f"{key}: must be >= {minimum}, got {value}")
        return None
    if maximum is not None and value > maximum:
        problems.append(f"{key}: must be <= {maximum}, got {value}")
        return None
    return value


def _as_fraction(value: Any, where: str, problems: list[str]) -> Fraction | None:
    try:
        if isinstance(value, bool):
            raise ValueError
        if isinstance(value, int):
            return Fraction(value)
        if isinstance(value, float):
            return Fraction(str(value))
        if isinstance(value, str):
            return Fraction(value)
    except (ValueError, ZeroDivisionError):
        pass
    problems.append(f"{where}: not a number or ratio: {value!r}")
    return None


def _build_graph_section(
    doc: Mapping[str, Any], problems: list[str]
) -> NetworkGraph | None:
    nodes = doc.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        problems.append("nodes: must be a nonempty list of node names")
        return None
    bad = [n for n in nodes if not isinstance(n, str) or not n]
    if bad:
        problems.append(f"nodes: names must be nonempty strings, got {bad!r}")
        return None
    if len(set(nodes)) != len(nodes):
        problems.append("nodes: duplicate node names")
        return None

    raw_links = doc.get("links")
    if not isinstance(raw_links, list):
        problems.append("links: must be a list")
        return None

    links = []
    before = len(problems)
    for i, item in enumerate(raw_links):
        where = f"links[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: must be an object")
            continue
        a, b = item.get("a"), item.get("b")
        if not isinstance(a, str) or not isinstance(b, str):
            problems.append(f"{where}: endpoints a and b must be node names")
            continue
        rate = _as_fraction(item.get("rate"), f"{where}.rate", problems)
        if rate is None:
            continue
        dist = item.get("distance_km")
        if dist is not None and not isinstance(dist, (int, float)):
            problems.append(f"{where}.distance_km: must be a number")
            continue
        links.append((a, b, rate, float(dist) if dist is not None else None))
        for key in item:
            if key not in {"a", "b", "rate", "distance_km"}:
                problems.append(f"{where}: unknown field {key!r}")
    if len(problems) > before:
        return None

    try:
        return build_graph(nodes, links)
    except (QvnetError, ValueError) as exc:
        problems.append(f"links: {exc}")
        return None


def _build_trunks(
    doc: Mapping[str, Any],
    graph: NetworkGraph,
    problems: list[str],
) -> list[TrunkLink] | None:
    raw = doc.get("trunks", [])
    if not isinstance(raw, list):
        problems.append("trunks: must be a list")
        return None

    trunks: list[TrunkLink] = []
    seen_pairs: set = set()
    before = len(problems)
    for i, item in enumerate(raw):
        where = f"trunks[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: must be an object")
            continue
        a, b = item.get("a"), item.get("b")
        if not isinstance(a, str) or not isinstance(b, str) or a == b:
            problems.append(f"{where}: endpoints a and b must be distinct node names")
            continue
        if not graph.has_node(a) or not graph.has_node(b):
            problems.append(f"{where}: unknown endpoint in {a}-{b}")
            continue
        pair = link_pair(a, b)
        if pair in seen_pairs:
            problems.append(f"{where}: second trunk for pair {pair[0]}-{pair[1]}")
            continue

        kind_text = item.get("kind", "physical")
        if kind_text not in ("physical", "logical"):
            problems.append(f"{where}.kind: must be physical or logical")
            continue
        kind = TrunkKind(kind_text)

        link = graph.link(a, b)
        if kind is TrunkKind.PHYSICAL:
            if link is None:
                problems.append(
                    f"{where}: physical trunk {a}-{b} has no physical link"
                )
                continue
            rate = link.rate
            if "rate" in item:
                declared = _as_fraction(item["rate"], f"{where}.rate", problems)
                if declared is not None and declared != rate:
                    problems.append(
                        f"{where}.rate: {declared} contradicts link rate {rate}"
                    )
                    continue
        else:
            if link is not None:
                problems.append(
                    f"{where}: pair {a}-{b} has a physical link; a logical "
                    "trunk cannot shadow it"
                )
                continue
            if "rate" not in item:
                problems.append(f"{where}: logical trunk needs an explicit rate")
                continue
            rate = _as_fraction(item["rate"], f"{where}.rate", problems)
            if rate is None:
                continue
            if rate < 0:
                problems.append(f"{where}.rate: must be nonnegative")
                continue

        raw_quotas = item.get("quotas", {})
        if not isinstance(raw_quotas, dict):
            problems.append(f"{where}.quotas: must be an object")
            continue
        quotas: dict[str, Fraction] = {}
        ok = True
        for subconn, share_raw in raw_quotas.items():
            if not isinstance(subconn, str) or not subconn:
                problems.append(f"{where}.quotas: ids must be nonempty strings")
                ok = False
                continue
            share = _as_fraction(share_raw, f"{where}.quotas[{subconn}]", problems)
            if share is None:
                ok = False
                continue
            if not 0 <= share <= 1:
                problems.append(
                    f"{where}.quotas[{subconn}]: {share} outside [0, 1]"
                )
                ok = False
                continue
            quotas[subconn] = share
        if not ok:
            continue

        for key in item:
            if key not in {"a", "b", "kind", "rate", "quotas"}:
                problems.append(f"{where}: unknown field {key!r}")

        seen_pairs.add(pair)
        trunks.append(TrunkLink(pair=pair, kind=kind, rate=rate, quotas=quotas))

    if len(problems) > before:
        return None
    return trunks


def _build_qvnets(
    doc: Mapping[str, Any],
    graph: NetworkGraph,
    trunks: list[TrunkLink],
    problems: list[str],
) -> list[QVNet] | None:
    raw = doc.get("qvnets", [])
    if not isinstance(raw, list):
        problems.append("qvnets: must be a list")
        return None

    qvnets: list[QVNet] = []
    seen_ids: set[str] = set()
    before = len(problems)
    for i, item in enumerate(raw):
        where = f"qvnets[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: must be an object")
            continue
        qvnet_id = item.get("id")
        if not isinstance(qvnet_id, str) or not qvnet_id:
            problems.append(f"{where}.id: must be a nonempty string")
            continue
        if qvnet_id in seen_ids:
            problems.append(f"{where}.id: duplicate QVNet id {qvnet_id!r}")
            continue
        seen_ids.add(qvnet_id)

        behavior = _parse_behavior(item.get("behavior"), f"{where}.behavior", problems)
        routing = _parse_routing(item.get("routing"), graph, f"{where}.routing", problems)
        access = _parse_access(item.get("access"), graph, f"{where}.access", problems)
        schedule = _parse_schedule(item.get("schedule"), f"{where}.schedule", problems)

        mode_text = item.get("relay_mode", RelayMode.HOP_BY_HOP.value)
        if mode_text not in (m.value for m in RelayMode):
            problems.append(f"{where}.relay_mode: unknown mode {mode_text!r}")
            continue

        for key in item:
            if key not in {"id", "behavior", "routing", "access", "schedule", "relay_mode"}:
                problems.append(f"{where}: unknown field {key!r}")

        if None in (behavior, routing, access, schedule):
            continue
        try:
            skeleton = assemble_qvnet(trunks, qvnet_id)
            qvnets.append(
                replace(
                    skeleton,
                    behavior=behavior,
                    routing=routing,
                    access=tuple(access),
                    schedule=tuple(schedule),
                    relay_mode=RelayMode(mode_text),
                )
            )
        except (QvnetError, ValueError) as exc:
            problems.append(f"{where}: {exc}")

    if len(problems) > before:
        return None
    return qvnets


def _parse_behavior(
    raw: Any, where: str, problems: list[str]
) -> Behavior | None:
    if raw is None:
        return Behavior(kind=BehaviorKind.BALANCED)
    if not isinstance(raw, dict):
        problems.append(f"{where}: must be an object")
        return None
    kind_text = raw.get("kind")
    if kind_text not in (k.value for k in BehaviorKind):
        problems.append(f"{where}.kind: unknown behavior {kind_text!r}")
        return None
    kind = BehaviorKind(kind_text)
    try:
        if kind is BehaviorKind.BROADCAST:
            hub = raw.get("hub")
            if not isinstance(hub, str):
                problems.append(f"{where}.hub: broadcast needs a hub node name")
                return None
            return Behavior(kind=kind, hub=hub)
        if kind is BehaviorKind.HIGH_THROUGHPUT:
            src, dst = raw.get("src"), raw.get("dst")
            if not isinstance(src, str) or not isinstance(dst, str):
                problems.append(f"{where}: high_throughput needs src and dst")
                return None
            return Behavior(kind=kind, pair=(src, dst))
        return Behavior(kind=kind)
    except ValueError as exc:
        problems.append(f"{where}: {exc}")
        return None


def _parse_routing(
    raw: Any, graph: NetworkGraph, where: str, problems: list[str]
) -> RoutingPolicy | None:
    if raw is None:
        return RoutingPolicy()
    if not isinstance(raw, dict):
        problems.append(f"{where}: must be an object")
        return None
    kind_text = raw.get("kind", RoutingKind.SHORTEST_PATH.value)
    if kind_text not in (k.value for k in RoutingKind):
        problems.append(f"{where}.kind: unknown routing {kind_text!r}")
        return None
    kind = RoutingKind(kind_text)
    if kind is RoutingKind.SHORTEST_PATH:
        return RoutingPolicy(kind=kind)

    routes_raw = raw.get("routes", [])
    if not isinstance(routes_raw, list):
        problems.append(f"{where}.routes: must be a list")
        return None
    routes: dict = {}
    for i, item in enumerate(routes_raw):
        spot = f"{where}.routes[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{spot}: must be an object")
            return None
        src, dst, path_nodes = item.get("src"), item.get("dst"), item.get("path")
        if not isinstance(src, str) or not isinstance(dst, str):
            problems.append(f"{spot}: needs src and dst node names")
            return None
        if (
            not isinstance(path_nodes, list)
            or not all(isinstance(n, str) for n in path_nodes)
        ):
            problems.append(f"{spot}.path: must be a list of node names")
            return None
        unknown = [n for n in path_nodes if not graph.has_node(n)]
        if unknown:
            problems.append(f"{spot}.path: unknown nodes {unknown!r}")
            return None
        try:
            path = Path(nodes=tuple(path_nodes))
        except ValueError as exc:
            problems.append(f"{spot}.path: {exc}")
            return None
        if path.endpoints != link_pair(src, dst):
            problems.append(f"{spot}.path: does not run between src and dst")
            return None
        routes[link_pair(src, dst)] = path
    try:
        return RoutingPolicy(kind=kind, static_routes=routes)
    except ValueError as exc:
        problems.append(f"{where}: {exc}")
        return None


def _parse_access(
    raw: Any, graph: NetworkGraph, where: str, problems: list[str]
) -> list[AccessRule] | None:
    if raw is None:
        return []
    if not isinstance(raw, list):
        problems.append(f"{where}: must be a list")
        return None
    rules: list[AccessRule] = []
    for i, item in enumerate(raw):
        spot = f"{where}[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{spot}: must be an object")
            return None
        principal = item.get("principal")
        if not isinstance(principal, str) or not principal:
            problems.append(f"{spot}.principal: must be a nonempty string")
            return None
        ceiling = item.get("max_blocks_per_tick")
        if not isinstance(ceiling, int) or isinstance(ceiling, bool) or ceiling < 0:
            problems.append(f"{spot}.max_blocks_per_tick: must be an int >= 0")
            return None
        pairs_raw = item.get("pairs", WILDCARD_PAIRS)
        if pairs_raw == WILDCARD_PAIRS:
            allowed: Any = WILDCARD_PAIRS
        elif isinstance(pairs_raw, list):
            allowed = set()
            for pair_item in pairs_raw:
                if (
                    not isinstance(pair_item, list)
                    or len(pair_item) != 2
                    or not all(isinstance(n, str) for n in pair_item)
                ):
                    problems.append(f"{spot}.pairs: each pair is a two-name list")
                    return None
                a, b = pair_item
                if not graph.has_node(a) or not graph.has_node(b) or a == b:
                    problems.append(f"{spot}.pairs: bad pair {a!r}-{b!r}")
                    return None
                allowed.add(link_pair(a, b))
            allowed = frozenset(allowed)
        else:
            problems.append(f"{spot}.pairs: must be \"*\" or a list of pairs")
            return None
        for key in item:
            if key not in {"principal", "pairs", "max_blocks_per_tick"}:
                problems.append(f"{spot}: unknown field {key!r}")
                return None
        rules.append(
            AccessRule(
                principal=principal,
                allowed_pairs=allowed,
                max_blocks_per_tick=ceiling,
            )
        )
    return rules


def _parse_schedule(
    raw: Any, where: str, problems: list[str]
) -> list[tuple[int, int]] | None:
    if raw is None:
        return []
    if not isinstance(raw, list):
        problems.append(f"{where}: must be a list of [start, stop) windows")
        return None
    windows: list[tuple[int, int]] = []
    for i, item in enumerate(raw):
        if (
            not isinstance(item, list)
            or len(item) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in item)
        ):
            problems.append(f"{where}[{i}]: must be [start, stop] of two ints")
            return None
        start, stop = item
        if start < 0 or start >= stop:
            problems.append(f"{where}[{i}]: window [{start}, {stop}) is empty")
            return None
        windows.append((start, stop))
    return windows


def _build_workload(
    doc: Mapping[str, Any],
    graph: NetworkGraph,
    qvnets: list[QVNet],
    duration: int,
    problems: list[str],
) -> list[KeyRequest] | None:
    raw = doc.get("workload", [])
    if not isinstance(raw, list):
        problems.append("workload: must be a list")
        return None
    qvnet_ids = {q.id for q in qvnets}

    # (tick, file order) pairs, flattened from single-tick and range entries
    staged: list[tuple[int, int, KeyRequest]] = []
    before = len(problems)
    for i, item in enumerate(raw):
        where = f"workload[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{where}: must be an object")
            continue

        has_tick = "tick" in item
        has_range = "ticks" in item
        if has_tick == has_range:
            problems.append(f"{where}: needs exactly one of tick or ticks")
            continue
        if has_tick:
            tick = item["tick"]
            if not isinstance(tick, int) or isinstance(tick, bool):
                problems.append(f"{where}.tick: must be an integer")
                continue
            if not 0 <= tick < duration:
                problems.append(
                    f"{where}.tick: {tick} outside the run [0, {duration})"
                )
                continue
            ticks = range(tick, tick + 1)
        else:
            span = item["ticks"]
            if (
                not isinstance(span, list)
                or len(span) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in span)
            ):
                problems.append(f"{where}.ticks: must be [start, stop] of two ints")
                continue
            start, stop = span
            if not (0 <= start < stop <= duration):
                problems.append(
                    f"{where}.ticks: [{start}, {stop}) must sit inside [0, {duration}]"
                )
                continue
            ticks = range(start, stop)

        qvnet_id = item.get("qvnet")
        if qvnet_id not in qvnet_ids:
            problems.append(f"{where}.qvnet: unknown QVNet {qvnet_id!r}")
            continue
        principal = item.get("principal")
        if not isinstance(principal, str) or not principal:
            problems.append(f"{where}.principal: must be a nonempty string")
            continue
        src, dst = item.get("src"), item.get("dst")
        if not isinstance(src, str) or not isinstance(dst, str):
            problems.append(f"{where}: needs src and dst node names")
            continue
        if not graph.has_node(src) or not graph.has_node(dst):
            problems.append(f"{where}: unknown endpoint in {src!r}-{dst!r}")
            continue
        if src == dst:
            problems.append(f"{where}: src and dst must differ")
            continue
        count = item.get("count")
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            problems.append(f"{where}.count: must be an int >= 1")
            continue
        for key in item:
            if key not in {"tick", "ticks", "qvnet", "principal", "src", "dst", "count"}:
                problems.append(f"{where}: unknown field {key!r}")

        for tick in ticks:
            staged.append(
                (
                    tick,
                    i,
                    KeyRequest(
                        qvnet_id=qvnet_id,
                        principal=principal,
                        pair=(src, dst),
                        count=count,
                        tick=tick,
                    ),
                )
            )

    if len(problems) > before:
        return None
    staged.sort(key=lambda t: (t[0], t[1]))
    return [request for _, _, request in staged]


def _build_updater(
    doc: Mapping[str, Any],
    trunks: list[TrunkLink],
    problems: list[str],
) -> UpdateRule | None:
    raw = doc.get("updater")
    if raw is None:
        return None
    if not isinstance(raw, dict):
        problems.append("updater: must be an object")
        return None

    period = _int_field(raw, "period", problems, required=True, minimum=1)
    alpha = _as_fraction(raw.get("alpha", "1/2"), "updater.alpha", problems)

    known_ids = set()
    for trunk in trunks:
        known_ids.update(trunk.subconn_ids)

    bounds: dict[str, dict[str, Fraction]] = {"floors": {}, "ceilings": {}}
    for field_name in ("floors", "ceilings"):
        raw_map = raw.get(field_name, {})
        if not isinstance(raw_map, dict):
            problems.append(f"updater.{field_name}: must be an object")
            return None
        for subconn, value in raw_map.items():
            if subconn not in known_ids:
                problems.append(
                    f"updater.{field_name}: {subconn!r} is not carried by any trunk"
                )
                continue
            share = _as_fraction(value, f"updater.{field_name}[{subconn}]", problems)
            if share is not None:
                bounds[field_name][subconn] = share

    for key in raw:
        if key not in {"period", "alpha", "floors", "ceilings"}:
            problems.append(f"updater: unknown field {key!r}")

    if period is None or alpha is None:
        return None
    rule = UpdateRule(
        period=period,
        alpha=alpha,
        floors=bounds["floors"],
        ceilings=bounds["ceilings"],
    )
    try:
        rule.validate()
    except QvnetError as exc:
        problems.append(f"updater: {exc}")
        return None
    return rule
