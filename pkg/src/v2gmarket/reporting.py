"""File outputs: JSON documents, CSV tables, rendered charts, run manifests.

Everything here is written atomically (a sibling tmp file is replaced over
the target) and from inputs only, never from the wall clock, so rerunning a
command with the same inputs reproduces every output byte for byte. That
includes the PNGs: the Agg backend draws them and the embedded metadata is
pinned.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .balancing import BalancingConfig, ShortfallDistribution
from .market_data import HHPS_PER_DAY
from .simulator import DayReport, SweepResult

#: pinned so library upgrades cannot sneak a version string into the bytes
_PNG_METADATA = {"Software": "v2gmarket"}
_DPI = 120


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write ``data`` to ``path`` via a sibling tmp file and os.replace."""
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as handle:
        handle.write(data)
    os.replace(tmp, path)


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: str) -> str:
    """Hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: str, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_csv(path: str, header, rows) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buffer.getvalue())


def write_manifest(path: str, *, command: str, seed, config, inputs, outputs) -> None:
    """Record what a command ran with: inputs by digest, outputs by name.

    ``inputs`` maps labels to paths of files that were read; they are
    digested here. No timestamps on purpose: the manifest of a rerun with
    identical inputs must be identical.
    """
    payload = {
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": {label: sha256_file(p) for label, p in sorted(inputs.items())},
        "outputs": sorted(outputs),
    }
    write_json(path, payload)


def day_series_rows(report: DayReport) -> tuple[list[str], list[list]]:
    """Header and rows of the per-hhp series table; None becomes empty."""
    header = [
        "hhp_index",
        "min_bid_pence_per_kw",
        "max_bid_pence_per_kw",
        "accepted_payment_pence_per_kw",
        "spot_pence_per_kw",
    ]
    blank = lambda v: "" if v is None else v  # noqa: E731
    rows = [
        [
            t,
            blank(report.min_bid_series[t]),
            blank(report.max_bid_series[t]),
            blank(report.accepted_payment_series[t]),
            report.spot_series[t],
        ]
        for t in range(HHPS_PER_DAY)
    ]
    return header, rows


def write_day_series(path: str, report: DayReport, fmt: str) -> None:
    """Write the per-hhp series as CSV or JSON depending on ``fmt``."""
    if fmt == "csv":
        header, rows = day_series_rows(report)
        write_csv(path, header, rows)
    else:
        write_json(path, report.to_dict()["series"])


def sweep_rows(result: SweepResult) -> tuple[list[str], list[list]]:
    """Header and rows of the sweep table, with deltas versus the row above."""
    header = [
        "fleet_count",
        "platform_profit_gbp_mean",
        "platform_profit_gbp_ci95",
        "fleet_profit_pence_per_kw_mean",
        "fleet_profit_pence_per_kw_ci95",
        "platform_profit_gbp_delta",
        "fleet_profit_pence_per_kw_delta",
    ]
    rows = []
    previous = None
    for point in result.points:
        rows.append(
            [
                point.fleet_count,
                point.platform_profit_gbp_mean,
                point.platform_profit_gbp_ci95,
                point.fleet_profit_pence_per_kw_mean,
                point.fleet_profit_pence_per_kw_ci95,
                "" if previous is None else point.platform_profit_gbp_mean
                - previous.platform_profit_gbp_mean,
                "" if previous is None else point.fleet_profit_pence_per_kw_mean
                - previous.fleet_profit_pence_per_kw_mean,
            ]
        )
        previous = point
    return header, rows


def write_sweep(path: str, result: SweepResult, fmt: str) -> None:
    if fmt == "csv":
        header, rows = sweep_rows(result)
        write_csv(path, header, rows)
    else:
        write_json(path, result.to_dict())


def shortfall_curve_rows(
    distribution: ShortfallDistribution, config: BalancingConfig
) -> list[tuple[float, float, float]]:
    """(shortfall kW, probability, pool pence per shortfall kW) over y > 0."""
    return [
        (y, p, config.const_factor * p * config.balancing_price_pence_per_kw)
        for y, p in distribution.support
        if y > 0
    ]


def _save_figure(fig, path: str) -> None:
    buffer = io.BytesIO()
    try:
        fig.savefig(buffer, format="png", dpi=_DPI, metadata=_PNG_METADATA)
    finally:
        plt.close(fig)
    atomic_write_bytes(path, buffer.getvalue())


def render_day_chart(report: DayReport, path: str) -> None:
    """Per-hhp price context: spot, bid extremes, accepted payments."""
    t = np.arange(HHPS_PER_DAY)
    as_nan = lambda series: np.array(  # noqa: E731
        [np.nan if v is None else v for v in series], dtype=float
    )
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.plot(t, report.spot_series, color="black", lw=1.4, label="spot")
    ax.plot(t, as_nan(report.min_bid_series), color="tab:green", lw=1.0, label="min bid")
    ax.plot(t, as_nan(report.max_bid_series), color="tab:red", lw=1.0, label="max bid")
    ax.plot(
        t,
        as_nan(report.accepted_payment_series),
        color="tab:blue",
        marker="o",
        ms=3,
        lw=1.0,
        label="avg accepted payment",
    )
    ax.set_xlabel("half-hour period")
    ax.set_ylabel("pence per kW per hhp")
    ax.set_title(f"trading day {report.day}")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    _save_figure(fig, path)


def render_sweep_chart(result: SweepResult, path: str) -> None:
    """Platform and fleet margins against fleet count, with 95% CI bars."""
    counts = [p.fleet_count for p in result.points]
    fig, ax_platform = plt.subplots(figsize=(7, 4.5))
    ax_platform.errorbar(
        counts,
        [p.platform_profit_gbp_mean for p in result.points],
        yerr=[p.platform_profit_gbp_ci95 for p in result.points],
        color="tab:blue",
        marker="o",
        capsize=4,
        label="platform profit (GBP)",
    )
    ax_platform.set_xlabel("fleet count")
    ax_platform.set_ylabel("platform profit (GBP)", color="tab:blue")
    ax_platform.set_xticks(counts)
    ax_fleet = ax_platform.twinx()
    ax_fleet.errorbar(
        counts,
        [p.fleet_profit_pence_per_kw_mean for p in result.points],
        yerr=[p.fleet_profit_pence_per_kw_ci95 for p in result.points],
        color="tab:orange",
        marker="s",
        capsize=4,
        label="fleet profit (p/kW)",
    )
    ax_fleet.set_ylabel("fleet profit (pence per expected kW)", color="tab:orange")
    ax_platform.set_title(f"competition sweep over {len(result.seeds)} seeds")
    ax_platform.grid(True, alpha=0.3)
    fig.tight_layout()
    _save_figure(fig, path)


def render_shortfall_chart(
    distribution: ShortfallDistribution, config: BalancingConfig, path: str
) -> None:
    """Shortfall mass as bars, revenue pool per outcome as a line."""
    rows = shortfall_curve_rows(distribution, config)
    fig, ax_prob = plt.subplots(figsize=(7, 4.5))
    if rows:
        ys = [r[0] for r in rows]
        width = max(0.4, 0.02 * (max(ys) - min(ys) or 1.0))
        ax_prob.bar(
            ys,
            [r[1] for r in rows],
            width=width,
            color="tab:blue",
            alpha=0.7,
            label="probability",
        )
        ax_pay = ax_prob.twinx()
        ax_pay.plot(
            ys,
            [r[2] for r in rows],
            color="tab:red",
            marker="o",
            lw=1.2,
            label="pool pence per kW",
        )
        ax_pay.set_ylabel("pool (pence per shortfall kW)", color="tab:red")
    ax_prob.set_xlabel("shortfall (kW)")
    ax_prob.set_ylabel("probability", color="tab:blue")
    ax_prob.set_title("shortfall outcomes above zero")
    ax_prob.grid(True, alpha=0.3)
    fig.tight_layout()
    _save_figure(fig, path)
