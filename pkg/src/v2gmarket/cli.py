"""Command line interface.

Subcommands:
    allocate  clear a recorded offer book against a demand profile
    simulate  run one simulated trading day, emit the day report and series
    report    simulate plus rendered charts next to the delimited output
    sweep     replay a day across fleet counts and seeds
    balance   settle one hhp's shortfall distribution and standby payments

Every command writes its outputs plus a manifest.json (inputs by sha256,
resolved configuration, output names) into --out-dir. Outputs carry no
timestamps, so a rerun with identical inputs is byte-identical.

Exit codes: 0 success, 2 invalid inputs, 3 filesystem trouble.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import reporting
from .balancing import balancing_payment, load_balancing_scenario, shortfall_distribution
from .clearing import allocate, load_contract_book
from .errors import ValidationError
from .market_data import (
    UNIT_FACTORS,
    load_demand_profile,
    load_price_series,
    partition_peaks_valleys,
)
from .simulator import (
    competition_sweep,
    load_sim_config,
    run_day,
    synthetic_price_series,
)


def _add_output_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format",
        choices=("json", "csv"),
        default="json",
        help="format of the tabular outputs (default: json)",
    )
    parser.add_argument(
        "--out-dir", default=".", help="directory for outputs (default: .)"
    )


def _add_price_source_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--prices", help="day-ahead price CSV; omitted: a synthetic day from --seed"
    )
    parser.add_argument(
        "--negative-valleys",
        action="store_true",
        help="push synthetic valley prices below zero (ignored with --prices)",
    )
    parser.add_argument(
        "--unit",
        choices=tuple(UNIT_FACTORS),
        default="pence_per_kwh",
        help="unit of the price CSV (default: pence_per_kwh)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="v2gmarket",
        description="clear, settle and simulate vehicle-to-grid export contracts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_alloc = sub.add_parser("allocate", help="clear an offer book for one day")
    p_alloc.add_argument("--book", required=True, help="offer book JSON")
    p_alloc.add_argument("--prices", required=True, help="day-ahead price CSV")
    p_alloc.add_argument("--demand", required=True, help="demand profile CSV")
    p_alloc.add_argument(
        "--unit",
        choices=tuple(UNIT_FACTORS),
        default="pence_per_kwh",
        help="unit of the price CSV (default: pence_per_kwh)",
    )
    p_alloc.add_argument(
        "--min-block-hhps",
        type=int,
        default=2,
        help="smallest peak or valley block (default: 2)",
    )
    _add_output_flags(p_alloc)
    p_alloc.set_defaults(handler=_cmd_allocate)

    p_sim = sub.add_parser("simulate", help="run one simulated trading day")
    p_sim.add_argument("--config", required=True, help="simulation config JSON")
    p_sim.add_argument(
        "--seed", type=int, help="override the config seed (also seeds synthetic prices)"
    )
    _add_price_source_flags(p_sim)
    _add_output_flags(p_sim)
    p_sim.set_defaults(handler=_cmd_simulate, render=False)

    p_rep = sub.add_parser("report", help="simulate and render charts")
    p_rep.add_argument("--config", required=True, help="simulation config JSON")
    p_rep.add_argument(
        "--seed", type=int, help="override the config seed (also seeds synthetic prices)"
    )
    _add_price_source_flags(p_rep)
    _add_output_flags(p_rep)
    p_rep.set_defaults(handler=_cmd_simulate, render=True)

    p_sweep = sub.add_parser("sweep", help="replay a day across fleet counts")
    p_sweep.add_argument("--config", required=True, help="simulation config JSON")
    p_sweep.add_argument(
        "--fleet-counts",
        default="6,8",
        help="comma separated fleet counts (default: 6,8)",
    )
    p_sweep.add_argument(
        "--num-seeds", type=int, default=100, help="seeds per count (default: 100)"
    )
    p_sweep.add_argument(
        "--seed", type=int, default=0, help="first seed of the range (default: 0)"
    )
    _add_price_source_flags(p_sweep)
    _add_output_flags(p_sweep)
    p_sweep.set_defaults(handler=_cmd_sweep)

    p_bal = sub.add_parser("balance", help="settle one hhp's shortfall")
    p_bal.add_argument("--scenario", required=True, help="balancing scenario JSON")
    p_bal.add_argument(
        "--grid-step-kw",
        type=float,
        default=1.0,
        help="convolution grid step for large contract sets (default: 1.0)",
    )
    _add_output_flags(p_bal)
    p_bal.set_defaults(handler=_cmd_balance)

    return parser


def _cmd_allocate(args) -> int:
    prices = load_price_series(args.prices, unit=args.unit)
    book = load_contract_book(args.book)
    demand = load_demand_profile(args.demand)
    partition = partition_peaks_valleys(prices, min_block_hhps=args.min_block_hhps)
    allocation = allocate(book, demand, partition, prices)

    os.makedirs(args.out_dir, exist_ok=True)
    out = lambda name: os.path.join(args.out_dir, name)  # noqa: E731
    payload = allocation.to_dict()
    if args.format == "csv":
        outputs = ["accepted.csv", "residual.csv", "eliminated.csv"]
        reporting.write_csv(
            out("accepted.csv"),
            ["offer_id", "payment_pence_per_kw", "fine_pence_per_kw"],
            [
                [r["offer_id"], r["payment_pence_per_kw"], r["fine_pence_per_kw"]]
                for r in payload["accepted"]
            ],
        )
        reporting.write_csv(
            out("residual.csv"),
            ["hhp_index", "residual_demand_kw"],
            list(enumerate(payload["residual_demand_kw"])),
        )
        reporting.write_csv(
            out("eliminated.csv"),
            ["offer_id", "reason"],
            [[r["offer_id"], r["reason"]] for r in payload["eliminated"]],
        )
    else:
        outputs = ["allocation.json"]
        reporting.write_json(out("allocation.json"), payload)
    reporting.write_manifest(
        out("manifest.json"),
        command="allocate",
        seed=None,
        config={
            "unit": args.unit,
            "min_block_hhps": args.min_block_hhps,
            "format": args.format,
        },
        inputs={"book": args.book, "prices": args.prices, "demand": args.demand},
        outputs=outputs,
    )
    print(
        f"accepted {len(allocation.accepted)} of {len(book)} offers; "
        f"wrote {', '.join(outputs + ['manifest.json'])} to {args.out_dir}"
    )
    return 0


def _resolve_prices(args, seed: int):
    """Price series plus the manifest's input map and price settings."""
    if args.prices:
        series = load_price_series(args.prices, unit=args.unit)
        return series, {"prices": args.prices}, {"unit": args.unit}
    series = synthetic_price_series(seed, negative_valleys=args.negative_valleys)
    return series, {}, {"synthetic_seed": seed, "negative_valleys": args.negative_valleys}


def _cmd_simulate(args) -> int:
    config = load_sim_config(args.config)
    seed = config.rng_seed if args.seed is None else args.seed
    config = dataclasses.replace(config, rng_seed=seed)
    prices, inputs, price_config = _resolve_prices(args, seed)
    report = run_day(config, prices)

    os.makedirs(args.out_dir, exist_ok=True)
    out = lambda name: os.path.join(args.out_dir, name)  # noqa: E731
    series_name = "series.csv" if args.format == "csv" else "series.json"
    outputs = ["day_report.json", series_name]
    reporting.write_json(out("day_report.json"), report.to_dict())
    reporting.write_day_series(out(series_name), report, args.format)
    if args.render:
        outputs.append("day_chart.png")
        reporting.render_day_chart(report, out("day_chart.png"))
    reporting.write_manifest(
        out("manifest.json"),
        command="report" if args.render else "simulate",
        seed=seed,
        config={
            "sim": dataclasses.asdict(config),
            "prices": price_config,
            "format": args.format,
        },
        inputs={"config": args.config, **inputs},
        outputs=outputs,
    )
    print(
        f"day {report.day}: platform {report.platform_profit_gbp:.2f} GBP, "
        f"fleets {report.fleets_profit_gbp:.2f} GBP, "
        f"{len(report.allocation.accepted)} contracts; "
        f"wrote {', '.join(outputs + ['manifest.json'])} to {args.out_dir}"
    )
    return 0


def _cmd_sweep(args) -> int:
    config = load_sim_config(args.config)
    try:
        counts = tuple(int(c) for c in args.fleet_counts.split(",") if c.strip())
    except ValueError as err:
        raise ValidationError(f"--fleet-counts must be comma separated integers: {err}")
    if not counts:
        raise ValidationError("--fleet-counts must name at least one count")
    if args.num_seeds < 1:
        raise ValidationError(f"--num-seeds must be positive, got {args.num_seeds}")
    seeds = range(args.seed, args.seed + args.num_seeds)
    prices, inputs, price_config = _resolve_prices(args, args.seed)
    result = competition_sweep(config, prices, counts, seeds)

    os.makedirs(args.out_dir, exist_ok=True)
    out = lambda name: os.path.join(args.out_dir, name)  # noqa: E731
    sweep_name = "sweep.csv" if args.format == "csv" else "sweep.json"
    outputs = [sweep_name, "sweep_chart.png"]
    reporting.write_sweep(out(sweep_name), result, args.format)
    reporting.render_sweep_chart(result, out("sweep_chart.png"))
    reporting.write_manifest(
        out("manifest.json"),
        command="sweep",
        seed=args.seed,
        config={
            "sim": dataclasses.asdict(config),
            "prices": price_config,
            "fleet_counts": list(counts),
            "num_seeds": args.num_seeds,
            "format": args.format,
        },
        inputs={"config": args.config, **inputs},
        outputs=outputs,
    )
    summary = "; ".join(
        f"{p.fleet_count} fleets: platform {p.platform_profit_gbp_mean:.2f} GBP"
        for p in result.points
    )
    print(f"{summary}; wrote {', '.join(outputs + ['manifest.json'])} to {args.out_dir}")
    return 0


def _cmd_balance(args) -> int:
    scenario = load_balancing_scenario(args.scenario)
    distribution = shortfall_distribution(scenario.active, grid_step_kw=args.grid_step_kw)
    payments = [
        {
            "ev_id": ev.ev_id,
            "payment_pence": balancing_payment(
                ev, scenario.plugged, distribution, scenario.config
            ),
        }
        for ev in scenario.plugged
    ]

    os.makedirs(args.out_dir, exist_ok=True)
    out = lambda name: os.path.join(args.out_dir, name)  # noqa: E731
    curve_name = "shortfall_curve.csv" if args.format == "csv" else "shortfall_curve.json"
    outputs = ["balance.json", curve_name, "shortfall_chart.png"]
    reporting.write_json(
        out("balance.json"),
        {
            "hhp_index": scenario.active.hhp_index,
            "expected_shortfall_kw": distribution.expected_shortfall(),
            "total_mass": distribution.total_mass(),
            "support": [
                {"shortfall_kw": y, "probability": p} for y, p in distribution.support
            ],
            "payments": payments,
        },
    )
    curve = reporting.shortfall_curve_rows(distribution, scenario.config)
    if args.format == "csv":
        reporting.write_csv(
            out(curve_name),
            ["shortfall_kw", "probability", "pool_pence_per_kw"],
            curve,
        )
    else:
        reporting.write_json(
            out(curve_name),
            [
                {"shortfall_kw": y, "probability": p, "pool_pence_per_kw": pay}
                for y, p, pay in curve
            ],
        )
    reporting.render_shortfall_chart(distribution, scenario.config, out("shortfall_chart.png"))
    reporting.write_manifest(
        out("manifest.json"),
        command="balance",
        seed=None,
        config={
            "grid_step_kw": args.grid_step_kw,
            "format": args.format,
            "balancing": dataclasses.asdict(scenario.config),
        },
        inputs={"scenario": args.scenario},
        outputs=outputs,
    )
    print(
        f"expected shortfall {distribution.expected_shortfall():.3f} kW over "
        f"{len(scenario.plugged)} plugged EVs; "
        f"wrote {', '.join(outputs + ['manifest.json'])} to {args.out_dir}"
    )
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
