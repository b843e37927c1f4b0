"""Key block generation, the one-time lifecycle, and multi-hop XOR relay.

Every key block is 256 bits and is used at most once.  Block payloads are
drawn from a keyed BLAKE2b stream so that a run is reproducible from its
seed alone.
"""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterator, Mapping

from .errors import InsufficientKeysError, NonMonotonicTickError, NoPathError
from .topology import NetworkGraph, NodePair, Path

BLOCK_BYTES = 32


class BlockState(Enum):
    AVAILABLE = "available"
    RESERVED = "reserved"
    CONSUMED = "consumed"


class RelayMode(Enum):
    """Who receives the intermediate XOR values.

    HOP_BY_HOP sends each value to the next node along the path;
    CENTRALIZED sends them all to a coordinating key manager.  The
    values themselves are identical, only the recipient differs, so
    both modes consume the same key material.
    """

    HOP_BY_HOP = "hop_by_hop"
    CENTRALIZED = "centralized"


@dataclass
class KeyBlock:
    id: int
    link: NodePair
    secret: bytes
    state: BlockState
    created_tick: int


@dataclass(frozen=True)
class VaultCounts:
    available: int
    reserved: int
    consumed: int

    @property
    def generated(self) -> int:
        return self.available + self.reserved + self.consumed


@dataclass(frozen=True)
class RelayTranscript:
    """Record of one end-to-end key delivery.

    end_to_end_key is the key of the first hop; consumed_ids lists one
    block per physical hop in path order; intermediate_messages holds
    the XOR of the two adjacent hop keys at each intermediate node.
    """

    path: Path
    mode: RelayMode
    end_to_end_key: bytes
    consumed_ids: tuple[int, ...]
    intermediate_messages: tuple[bytes, ...]


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("xor operands must have equal length")
    return bytes(x ^ y for x, y in zip(a, b))


def _block_secret(seed: int, pair: NodePair, block_id: int) -> bytes:
    h = hashlib.blake2b(digest_size=BLOCK_BYTES, key=seed.to_bytes(8, "big"))
    h.update(pair[0].encode())
    h.update(b"\x00")
    h.update(pair[1].encode())
    h.update(b"\x00")
    h.update(block_id.to_bytes(8, "big"))
    return h.digest()


def reconstruct_end_key(transcript: RelayTranscript, last_hop_key: bytes) -> bytes:
    """Destination-side recovery: XOR the last hop key with every message."""
    out = last_hop_key
    for message in transcript.intermediate_messages:
        out = xor_bytes(out, message)
    return out


class KeyVault:
    """Per-link FIFO store of key blocks with exact lifecycle accounting."""

    def __init__(self, graph: NetworkGraph):
        self._graph = graph
        self._queues: dict[NodePair, deque[KeyBlock]] = {
            link.pair: deque() for link in graph.links
        }
        self._reserved: dict[NodePair, int] = {p: 0 for p in self._queues}
        self._consumed: dict[NodePair, int] = {p: 0 for p in self._queues}
        self._generated: dict[NodePair, int] = {p: 0 for p in self._queues}
        self._carry: dict[NodePair, Fraction] = {
            p: Fraction(0) for p in self._queues
        }
        self._next_id = 0
        self._last_tick: int | None = None

    @property
    def graph(self) -> NetworkGraph:
        return self._graph

    def tick_generate(self, tick: int, seed: int) -> dict[NodePair, int]:
        """Grow every link's vault by its rate for one tick.

        Fractional rates accumulate in a carry so that the long-run
        block count equals rate times elapsed ticks exactly.
        """
        if self._last_tick is not None and tick <= self._last_tick:
            raise NonMonotonicTickError(
                f"tick {tick} is not after tick {self._last_tick}"
            )
        self._last_tick = tick
        counts: dict[NodePair, int] = {}
        for link in self._graph.links:
            pair = link.pair
            self._carry[pair] += link.rate
            fresh = math.floor(self._carry[pair])
            self._carry[pair] -= fresh
            for _ in range(fresh):
                block = KeyBlock(
                    id=self._next_id,
                    link=pair,
                    secret=_block_secret(seed, pair, self._next_id),
                    state=BlockState.AVAILABLE,
                    created_tick=tick,
                )
                self._next_id += 1
                self._queues[pair].append(block)
            self._generated[pair] += fresh
            counts[pair] = fresh
        return counts

    def available_count(self, pair: NodePair) -> int:
        if pair not in self._queues:
            raise NoPathError(f"no link {pair[0]}-{pair[1]}", pair=pair)
        return len(self._queues[pair])

    def reserve_next(self, pair: NodePair) -> KeyBlock:
        """Move the oldest available block on a link to RESERVED."""
        if pair not in self._queues:
            raise NoPathError(f"no link {pair[0]}-{pair[1]}", pair=pair)
        if not self._queues[pair]:
            raise InsufficientKeysError(pair)
        block = self._queues[pair].popleft()
        block.state = BlockState.RESERVED
        self._reserved[pair] += 1
        return block

    def release(self, block: KeyBlock) -> None:
        """Abort a reservation; the block returns to the head of its queue."""
        if block.state is not BlockState.RESERVED:
            raise ValueError(f"block {block.id} is {block.state.value}, not reserved")
        block.state = BlockState.AVAILABLE
        self._reserved[block.link] -= 1
        self._queues[block.link].appendleft(block)

    def consume(self, block: KeyBlock) -> None:
        if block.state is not BlockState.RESERVED:
            raise ValueError(f"block {block.id} is {block.state.value}, not reserved")
        block.state = BlockState.CONSUMED
        self._reserved[block.link] -= 1
        self._consumed[block.link] += 1

    def xor_relay(
        self, path: Path, mode: RelayMode = RelayMode.HOP_BY_HOP
    ) -> RelayTranscript:
        """Deliver one end-to-end key along a path of physical links.

        Consumes exactly one block per hop.  If any hop lacks material
        the whole relay aborts and every reservation is released.
        """
        for hop in path.hops:
            if self._graph.link(*hop) is None:
                raise NoPathError(
                    f"path uses missing link {hop[0]}-{hop[1]}", pair=hop
                )
        reserved: list[KeyBlock] = []
        try:
            for hop in path.hops:
                reserved.append(self.reserve_next(hop))
        except InsufficientKeysError:
            for block in reversed(reserved):
                self.release(block)
            raise

        keys = [block.secret for block in reserved]
        end_key = keys[0]
        messages = tuple(
            xor_bytes(keys[i - 1], keys[i]) for i in range(1, len(keys))
        )
        check = keys[-1]
        for message in messages:
            check = xor_bytes(check, message)
        if check != end_key:
            raise AssertionError("relay reconstruction mismatch")

        for block in reserved:
            self.consume(block)
        return RelayTranscript(
            path=path,
            mode=mode,
            end_to_end_key=end_key,
            consumed_ids=tuple(block.id for block in reserved),
            intermediate_messages=messages,
        )

    def snapshot(self) -> dict[NodePair, VaultCounts]:
        return {
            pair: VaultCounts(
                available=len(self._queues[pair]),
                reserved=self._reserved[pair],
                consumed=self._consumed[pair],
            )
            for pair in sorted(self._queues)
        }

    def assert_conserved(self) -> None:
        """Check generated == available + reserved + consumed on every link."""
        for pair, counts in self.snapshot().items():
            if counts.generated != self._generated[pair]:
                raise AssertionError(
                    f"key conservation broken on {pair}: generated "
                    f"{self._generated[pair]} but accounted {counts.generated}"
                )

    def iter_available(self, pair: NodePair) -> Iterator[KeyBlock]:
        return iter(self._queues[pair])
