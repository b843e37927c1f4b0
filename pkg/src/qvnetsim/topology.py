"""Physical network graphs: nodes, undirected keyed links, path enumeration."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import (
    DuplicateLinkError,
    NegativeRateError,
    SelfLoopError,
    UnknownNodeError,
)

DEFAULT_MAX_HOPS = 8

NodePair = tuple[str, str]


def link_pair(a: str, b: str) -> NodePair:
    """Canonical unordered pair: endpoints in lexicographic order."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class PhysicalLink:
    """An undirected QKD link with a key generation rate in blocks per tick."""

    pair: NodePair
    rate: Fraction
    distance_km: float | None = None


@dataclass(frozen=True)
class Path:
    """A simple path given as its node sequence."""

    nodes: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.nodes) < 2:
            raise ValueError("a path needs at least two nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError(f"path revisits a node: {self.nodes}")

    @property
    def hops(self) -> tuple[NodePair, ...]:
        return tuple(
            link_pair(a, b) for a, b in zip(self.nodes, self.nodes[1:])
        )

    @property
    def hop_count(self) -> int:
        return len(self.nodes) - 1

    @property
    def endpoints(self) -> NodePair:
        return link_pair(self.nodes[0], self.nodes[-1])


@dataclass(frozen=True)
class NetworkGraph:
    """Validated undirected graph. Nodes and links are kept sorted."""

    nodes: tuple[str, ...]
    links: tuple[PhysicalLink, ...]

    @cached_property
    def _link_map(self) -> Mapping[NodePair, PhysicalLink]:
        return {link.pair: link for link in self.links}

    @cached_property
    def _adjacency(self) -> Mapping[str, tuple[str, ...]]:
        adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for link in self.links:
            a, b = link.pair
            adj[a].append(b)
            adj[b].append(a)
        return {n: tuple(sorted(vs)) for n, vs in adj.items()}

    def has_node(self, name: str) -> bool:
        return name in self._adjacency

    def link(self, a: str, b: str) -> PhysicalLink | None:
        return self._link_map.get(link_pair(a, b))

    def rate(self, a: str, b: str) -> Fraction:
        link = self.link(a, b)
        if link is None:
            raise UnknownNodeError(f"no link between {a} and {b}")
        return link.rate

    def neighbors(self, node: str) -> tuple[str, ...]:
        if node not in self._adjacency:
            raise UnknownNodeError(f"unknown node {node!r}")
        return self._adjacency[node]


def build_graph(
    nodes: Iterable[str],
    links: Iterable[tuple | PhysicalLink],
) -> NetworkGraph:
    """Build and validate a graph.

    Each link may be a PhysicalLink or a tuple (a, b, rate) or
    (a, b, rate, distance_km).  Rates accept anything Fraction does.

    Raises UnknownNodeError, SelfLoopError, DuplicateLinkError and
    NegativeRateError on bad input.
    """
    node_set = set()
    for name in nodes:
        if not isinstance(name, str) or not name:
            raise ValueError(f"node names must be nonempty strings, got {name!r}")
        node_set.add(name)

    seen: dict[NodePair, PhysicalLink] = {}
    for raw in links:
        if isinstance(raw, PhysicalLink):
            (a, b), rate, dist = raw.pair, raw.rate, raw.distance_km
        else:
            a, b, rate = raw[0], raw[1], raw[2]
            dist = raw[3] if len(raw) > 3 else None
        for end in (a, b):
            if end not in node_set:
                raise UnknownNodeError(f"link endpoint {end!r} is not a declared node")
        if a == b:
            raise SelfLoopError(f"link {a}-{b} is a self loop")
        rate = Fraction(rate)
        if rate < 0:
            raise NegativeRateError(f"link {a}-{b} has negative rate {rate}")
        pair = link_pair(a, b)
        if pair in seen:
            raise DuplicateLinkError(f"link {pair[0]}-{pair[1]} declared twice")
        seen[pair] = PhysicalLink(pair=pair, rate=rate, distance_km=dist)

    return NetworkGraph(
        nodes=tuple(sorted(node_set)),
        links=tuple(seen[p] for p in sorted(seen)),
    )


def enumerate_paths(
    graph: NetworkGraph,
    src: str,
    dst: str,
    max_hops: int = DEFAULT_MAX_HOPS,
) -> list[Path]:
    """All simple paths from src to dst with at most max_hops links.

    Results are sorted by hop count, ties broken by the node sequence,
    so the first entry is the canonical shortest path.
    """
    for end in (src, dst):
        if not graph.has_node(end):
            raise UnknownNodeError(f"unknown node {end!r}")
    if src == dst:
        raise ValueError("path endpoints must differ")

    found: list[Path] = []
    trail: list[str] = [src]
    on_trail = {src}

    def walk(at: str) -> None:
        if len(trail) - 1 >= max_hops:
            return
        for nxt in graph.neighbors(at):
            if nxt in on_trail:
                continue
            trail.append(nxt)
            if nxt == dst:
                found.append(Path(nodes=tuple(trail)))
            else:
                on_trail.add(nxt)
                walk(nxt)
                on_trail.discard(nxt)
            trail.pop()

    walk(src)
    found.sort(key=lambda p: (p.hop_count, p.nodes))
    return found


def validate_connectivity(
    graph: NetworkGraph,
    pairs: Sequence[NodePair],
) -> dict[NodePair, bool]:
    """Per-pair reachability report over the physical links."""
    report: dict[NodePair, bool] = {}
    for a, b in pairs:
        for end in (a, b):
            if not graph.has_node(end):
                raise UnknownNodeError(f"unknown node {end!r}")
        report[link_pair(a, b)] = _reachable(graph, a, b)
    return report


def _reachable(graph: NetworkGraph, src: str, dst: str) -> bool:
    if src == dst:
        return True
    seen = {src}
    frontier = [src]
    while frontier:
        node = frontier.pop()
        for nxt in graph.neighbors(node):
            if nxt == dst:
                return True
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return False
