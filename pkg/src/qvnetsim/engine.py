"""Discrete-tick simulation: generate keys, serve requests, rebalance.

Tick order is fixed: key generation, budget replenish, workload service
in arrival order, demand observation, and (on period boundaries) quota
rebalancing.  Runs are deterministic; the same scenario and seed always
produce byte-identical metric output.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .behavior import Allocation, build_lp, qvnet_capacities, solve_behavior
from .errors import DenialReason, EmptyQVNetError, NoPathError
from .keymat import KeyVault, VaultCounts
from .kms import KeyService, LedgerEntry
from .scenario import Scenario
from .topology import NodePair
from .updater import DemandStats, rebalance
from .virtlink import TrunkLink

CSV_COLUMNS = (
    "tick",
    "qvnet",
    "requested",
    "granted",
    "denied_access",
    "denied_quota",
    "denied_schedule",
    "denied_nopath",
    "denied_insufficient",
    "phys_consumed",
)

_REASON_COLUMN = {
    DenialReason.ACCESS_DENIED: "denied_access",
    DenialReason.QUOTA_EXCEEDED: "denied_quota",
    DenialReason.SCHEDULE_CLOSED: "denied_schedule",
    DenialReason.NO_PATH: "denied_nopath",
    DenialReason.INSUFFICIENT_KEYS: "denied_insufficient",
}


@dataclass(frozen=True)
class TickRow:
    """Per (tick, QVNet) service counters.  Denials are counted in blocks."""

    tick: int
    qvnet: str
    requested: int = 0
    granted: int = 0
    denied_access: int = 0
    denied_quota: int = 0
    denied_schedule: int = 0
    denied_nopath: int = 0
    denied_insufficient: int = 0
    phys_consumed: int = 0


@dataclass(frozen=True)
class MetricsReport:
    """Everything a run produced, ready for rendering or inspection."""

    scenario_name: str
    seed: int
    duration: int
    window_size: int
    qvnet_ids: tuple[str, ...]
    rows: tuple[TickRow, ...]
    vault_series: Mapping[NodePair, tuple[int, ...]]
    window_grants: Mapping[tuple[str, NodePair], tuple[int, ...]]
    allocations: Mapping[str, Allocation | None]
    allocation_notes: Mapping[str, str]
    final_vault: Mapping[NodePair, VaultCounts]
    final_trunks: tuple[TrunkLink, ...]
    ledger: tuple[LedgerEntry, ...] = field(repr=False, default=())

    def window_total(self, qvnet_id: str, pair: NodePair, window: int) -> int:
        """Granted blocks for one pair in the window-th window."""
        series = self.window_grants.get((qvnet_id, pair), ())
        return series[window] if window < len(series) else 0


def run(scenario: Scenario) -> MetricsReport:
    """Execute a scenario start to finish and assemble the report."""
    vault = KeyVault(scenario.graph)
    service = KeyService(
        scenario.graph,
        vault,
        scenario.trunks,
        {q.id: q for q in scenario.qvnets},
    )

    allocations: dict[str, Allocation | None] = {}
    notes: dict[str, str] = {}
    for qvnet in scenario.qvnets:
        try:
            lp = build_lp(qvnet, capacities=None)
            allocations[qvnet.id] = solve_behavior(lp)
        except EmptyQVNetError:
            allocations[qvnet.id] = None
            notes[qvnet.id] = "no links carry this QVNet"
        except NoPathError as exc:
            allocations[qvnet.id] = None
            notes[qvnet.id] = f"unroutable commodity: {exc}"

    stats = (
        DemandStats.from_trunks(scenario.trunks, scenario.updater.alpha)
        if scenario.updater is not None
        else None
    )

    by_tick: dict[int, list] = {}
    for request in scenario.workload:
        by_tick.setdefault(request.tick, []).append(request)

    qvnet_ids = scenario.qvnet_ids()
    rows: list[TickRow] = []
    vault_series: dict[NodePair, list[int]] = {
        link.pair: [] for link in scenario.graph.links
    }
    window_grants: dict[tuple[str, NodePair], list[int]] = {}
    windows = _window_count(scenario.duration, scenario.window_size)
    ledger_mark = 0

    for tick in range(scenario.duration):
        vault.tick_generate(tick, scenario.seed)
        service.begin_tick(tick)
        for request in by_tick.get(tick, ()):
            service.request_key(request)
        vault.assert_conserved()

        tick_entries = service.ledger[ledger_mark:]
        ledger_mark = len(service.ledger)
        rows.extend(_tick_rows(tick, qvnet_ids, tick_entries))

        snapshot = vault.snapshot()
        for pair, series in vault_series.items():
            series.append(snapshot[pair].available)

        window = tick // scenario.window_size
        for entry in tick_entries:
            if entry.granted:
                key = (entry.qvnet_id, entry.pair)
                series = window_grants.setdefault(key, [0] * windows)
                series[window] += entry.granted

        if stats is not None:
            stats.observe(tick, tick_entries)
            if (tick + 1) % scenario.updater.period == 0:
                for pair in sorted(service.trunks):
                    trunk = service.trunks[pair]
                    service.apply_quotas(
                        pair, rebalance(trunk, stats, scenario.updater)
                    )

    return MetricsReport(
        scenario_name=scenario.name,
        seed=scenario.seed,
        duration=scenario.duration,
        window_size=scenario.window_size,
        qvnet_ids=qvnet_ids,
        rows=tuple(rows),
        vault_series={p: tuple(s) for p, s in sorted(vault_series.items())},
        window_grants={k: tuple(s) for k, s in sorted(window_grants.items())},
        allocations=allocations,
        allocation_notes=notes,
        final_vault=vault.snapshot(),
        final_trunks=tuple(
            service.trunks[pair] for pair in sorted(service.trunks)
        ),
        ledger=tuple(service.ledger),
    )


def _window_count(duration: int, window_size: int) -> int:
    return (duration + window_size - 1) // window_size


def _tick_rows(
    tick: int, qvnet_ids: tuple[str, ...], entries: list[LedgerEntry]
) -> list[TickRow]:
    counters = {
        qvnet_id: {column: 0 for column in CSV_COLUMNS[2:]}
        for qvnet_id in qvnet_ids
    }
    for entry in entries:
        bucket = counters[entry.qvnet_id]
        bucket["requested"] += entry.requested
        bucket["granted"] += entry.granted
        if entry.denial_reason is not None:
            bucket[_REASON_COLUMN[entry.denial_reason]] += (
                entry.requested - entry.granted
            )
        bucket["phys_consumed"] += sum(count for _, count in entry.link_consumed)
    return [
        TickRow(tick=tick, qvnet=qvnet_id, **counters[qvnet_id])
        for qvnet_id in qvnet_ids
    ]


def emit_metrics(report: MetricsReport, format: str = "csv") -> str:
    """Render a report as delimited text or a JSON document."""
    if format == "csv":
        return _emit_csv(report)
    if format == "json":
        return _emit_json(report)
    raise ValueError(f"unknown format {format!r}")


def _emit_csv(report: MetricsReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        writer.writerow(
            [
                row.tick,
                row.qvnet,
                row.requested,
                row.granted,
                row.denied_access,
                row.denied_quota,
                row.denied_schedule,
                row.denied_nopath,
                row.denied_insufficient,
                row.phys_consumed,
            ]
        )
    return out.getvalue()


def _frac(value: Fraction) -> str:
    return str(value)


def _emit_json(report: MetricsReport) -> str:
    doc = {
        "scenario": report.scenario_name,
        "seed": report.seed,
        "duration": report.duration,
        "window_size": report.window_size,
        "qvnets": list(report.qvnet_ids),
        "rows": [
            {
                "tick": row.tick,
                "qvnet": row.qvnet,
                "requested": row.requested,
                "granted": row.granted,
                "denied_access": row.denied_access,
                "denied_quota": row.denied_quota,
                "denied_schedule": row.denied_schedule,
                "denied_nopath": row.denied_nopath,
                "denied_insufficient": row.denied_insufficient,
                "phys_consumed": row.phys_consumed,
            }
            for row in report.rows
        ],
        "vault_occupancy": [
            {"a": pair[0], "b": pair[1], "available": list(series)}
            for pair, series in report.vault_series.items()
        ],
        "window_grants": [
            {
                "qvnet": qvnet_id,
                "src": pair[0],
                "dst": pair[1],
                "granted": list(series),
            }
            for (qvnet_id, pair), series in report.window_grants.items()
        ],
        "allocations": [
            _allocation_doc(qvnet_id, report) for qvnet_id in report.qvnet_ids
        ],
        "final_vault": [
            {
                "a": pair[0],
                "b": pair[1],
                "available": counts.available,
                "reserved": counts.reserved,
                "consumed": counts.consumed,
            }
            for pair, counts in report.final_vault.items()
        ],
        "final_trunks": [
            {
                "a": trunk.pair[0],
                "b": trunk.pair[1],
                "kind": trunk.kind.value,
                "rate": _frac(trunk.rate),
                "quotas": {name: _frac(q) for name, q in trunk.quotas.items()},
            }
            for trunk in report.final_trunks
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _allocation_doc(qvnet_id: str, report: MetricsReport) -> dict:
    allocation = report.allocations.get(qvnet_id)
    if allocation is None:
        return {
            "qvnet": qvnet_id,
            "objective": None,
            "note": report.allocation_notes.get(qvnet_id, ""),
        }
    return {
        "qvnet": qvnet_id,
        "objective": _frac(allocation.objective),
        "rates": [
            {"src": pair[0], "dst": pair[1], "rate": _frac(rate)}
            for pair, rate in sorted(allocation.rates.items())
        ],
        "paths": [
            {
                "src": pair[0],
                "dst": pair[1],
                "path": list(path.nodes),
                "flow": _frac(flow),
            }
            for pair in sorted(allocation.path_flows)
            for path, flow in allocation.path_flows[pair]
            if flow != 0
        ],
    }


def allocation_json(allocation: Allocation) -> str:
    """Standalone JSON for one allocation, used by the solve command."""
    doc = {
        "objective": _frac(allocation.objective),
        "rates": [
            {"src": pair[0], "dst": pair[1], "rate": _frac(rate)}
            for pair, rate in sorted(allocation.rates.items())
        ],
        "paths": [
            {
                "src": pair[0],
                "dst": pair[1],
                "path": list(path.nodes),
                "flow": _frac(flow),
            }
            for pair in sorted(allocation.path_flows)
            for path, flow in allocation.path_flows[pair]
            if flow != 0
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
