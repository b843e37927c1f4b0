"""Render a metrics report to PNG figures alongside the delimited output."""

from __future__ import annotations

import pathlib
from typing import Iterable

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .engine import MetricsReport

_FIGSIZE = (8.0, 4.8)


def render_report_figures(
    report: MetricsReport, outdir: str | pathlib.Path
) -> list[pathlib.Path]:
    """Write the standard figure set for one run; returns the paths."""
    outdir = pathlib.Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [
        _grants_figure(report, outdir / "grants_per_tick.png"),
        _denials_figure(report, outdir / "denial_breakdown.png"),
        _vault_figure(report, outdir / "vault_occupancy.png"),
    ]
    return sorted(written)


def _finish(fig, path: pathlib.Path) -> pathlib.Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _grants_figure(report: MetricsReport, path: pathlib.Path) -> pathlib.Path:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for qvnet_id in report.qvnet_ids:
        ticks = [row.tick for row in report.rows if row.qvnet == qvnet_id]
        granted = [row.granted for row in report.rows if row.qvnet == qvnet_id]
        ax.plot(ticks, granted, label=qvnet_id, linewidth=1.2)
    ax.set_xlabel("tick")
    ax.set_ylabel("granted blocks")
    ax.set_title(f"Granted blocks per tick ({report.scenario_name})")
    if report.qvnet_ids:
        ax.legend(loc="best", fontsize="small")
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def _denials_figure(report: MetricsReport, path: pathlib.Path) -> pathlib.Path:
    reasons = (
        ("denied_access", "access"),
        ("denied_quota", "quota"),
        ("denied_schedule", "schedule"),
        ("denied_nopath", "no path"),
        ("denied_insufficient", "insufficient keys"),
    )
    totals = {
        qvnet_id: {column: 0 for column, _ in reasons}
        for qvnet_id in report.qvnet_ids
    }
    for row in report.rows:
        for column, _ in reasons:
            totals[row.qvnet][column] += getattr(row, column)

    fig, ax = plt.subplots(figsize=_FIGSIZE)
    positions = range(len(report.qvnet_ids))
    bottoms = [0] * len(report.qvnet_ids)
    for column, label in reasons:
        heights = [totals[q][column] for q in report.qvnet_ids]
        ax.bar(positions, heights, bottom=bottoms, label=label)
        bottoms = [b + h for b, h in zip(bottoms, heights)]
    ax.set_xticks(list(positions))
    ax.set_xticklabels(report.qvnet_ids, rotation=20, ha="right")
    ax.set_ylabel("denied blocks (whole run)")
    ax.set_title(f"Denials by reason ({report.scenario_name})")
    ax.legend(loc="best", fontsize="small")
    return _finish(fig, path)


def _vault_figure(report: MetricsReport, path: pathlib.Path) -> pathlib.Path:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for pair, series in report.vault_series.items():
        ax.plot(
            range(len(series)),
            series,
            label=f"{pair[0]}-{pair[1]}",
            linewidth=1.2,
        )
    ax.set_xlabel("tick")
    ax.set_ylabel("available key blocks")
    ax.set_title(f"Vault occupancy per link ({report.scenario_name})")
    if report.vault_series:
        ax.legend(loc="best", fontsize="small")
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)
