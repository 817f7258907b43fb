"""Fleet behaviour simulation over a trading day.

Fleets here are price takers on the charging side: every EV books one cheap
import slot on the day-ahead ladder (cheapest hhps first, a fixed number of
EVs per hhp before the ladder moves on), and its export bid for the evening
peaks is that import price plus a fixed per-kW margin for wear and hassle.
Capacity varies per EV and per peak block by a seeded jitter; bids do not
depend on the seed at all, so two runs with different seeds differ only in
offered quantities.

run_day clears one day and folds the outcome into a DayReport; the
competition sweep replays days over many seeds and fleet counts to show how
entry moves platform and fleet margins.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field, replace

import numpy as np

from .clearing import Allocation, ContractOffer, Hhp, allocate
from .errors import ValidationError
from .market_data import (
    HHPS_PER_DAY,
    DemandProfile,
    PriceSeries,
    partition_peaks_valleys,
)


@dataclass(frozen=True)
class FleetProfile:
    """Static description of one fleet.

    Attributes:
        fleet_id: book identifier for all the fleet's offers.
        ev_count: vehicles able to export.
        export_kw_per_ev: nominal export capacity per EV per peak block.
        extra_cost_pence_per_kw: margin added on top of the import price
            when bidding (battery wear, driver scheduling).
    """

    fleet_id: str
    ev_count: int
    export_kw_per_ev: float = 100.0
    extra_cost_pence_per_kw: float = 3.0

    def __post_init__(self):
        if self.ev_count < 0:
            raise ValidationError(f"EV count must be non-negative, got {self.ev_count}")
        if not self.export_kw_per_ev > 0:
            raise ValidationError(
                f"export capacity must be positive, got {self.export_kw_per_ev}"
            )


@dataclass(frozen=True)
class SimConfig:
    """Knobs for one simulated trading day."""

    fleets: tuple[FleetProfile, ...]
    demand_kw: float = 3000.0
    penalty_pence_per_kw: float = 50.0
    rng_seed: int = 0
    capacity_jitter: float = 0.1
    import_slots_per_hhp: int = 4
    min_block_hhps: int = 2

    def __post_init__(self):
        if not 0.0 <= self.capacity_jitter < 1.0:
            raise ValidationError(
                f"capacity jitter must lie in [0, 1), got {self.capacity_jitter}"
            )
        if self.import_slots_per_hhp < 1:
            raise ValidationError(
                f"at least one import slot per hhp is required, got {self.import_slots_per_hhp}"
            )


def synthetic_price_series(
    seed: int, *, negative_valleys: bool = False, day: str = "2026-06-01"
) -> PriceSeries:
    """A plausible day-ahead curve: two evening-and-morning peak bumps.

    The deterministic backbone carries two Gaussian bumps over a flat base
    and the seed only drives small Gaussian noise, so every seed yields the
    same peak structure. ``negative_valleys`` shifts the whole curve down
    far enough that the cheap hhps clear below zero, as happens on windy
    low-demand days.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(HHPS_PER_DAY, dtype=float)
    backbone = (
        3.5
        + 9.0 * np.exp(-(((t - 17.5) / 3.2) ** 2))
        + 7.0 * np.exp(-(((t - 36.0) / 3.8) ** 2))
    )
    prices = backbone + rng.normal(0.0, 0.35, size=HHPS_PER_DAY)
    if negative_valleys:
        prices = prices - 5.5
    return PriceSeries(day=day, market="day_ahead", prices=tuple(float(p) for p in prices))


def generate_fleet_offers(config: SimConfig, prices: PriceSeries) -> tuple[ContractOffer, ...]:
    """Build the day's offer book for every fleet in ``config``.

    Import slots: hhps sorted by price ascending form a ladder and each EV
    takes position ``ev_index * n_fleets + fleet_index`` on it, with
    ``import_slots_per_hhp`` EVs sharing an hhp before the next (more
    expensive) one opens. Interleaving fleets keeps slot congestion fair:
    no fleet corners the cheapest charging hhps just by being listed first.

    Every EV then offers its jittered capacity at each hhp of each peak
    block, bidding import price plus the fleet margin. Per-EV capacity is
    redrawn per peak block (fleet, then EV, then block order), never per
    hhp: within a block the EV offers one battery, and the clearing engine's
    duplicate rule keeps it from being sold twice there.
    """
    partition = partition_peaks_valleys(prices, min_block_hhps=config.min_block_hhps)
    peak_blocks = [b for b in partition if b.label == "peak"]
    ladder = sorted(range(HHPS_PER_DAY), key=lambda t: (prices[t], t))
    rng = np.random.default_rng(config.rng_seed)
    n_fleets = len(config.fleets)
    offers: list[ContractOffer] = []
    next_id = 1
    for fleet_index, fleet in enumerate(config.fleets):
        for ev_index in range(fleet.ev_count):
            position = ev_index * n_fleets + fleet_index
            slot_hhp = ladder[(position // config.import_slots_per_hhp) % HHPS_PER_DAY]
            bid = prices[slot_hhp] + fleet.extra_cost_pence_per_kw
            for block in peak_blocks:
                capacity = fleet.export_kw_per_ev * (
                    1.0 + rng.uniform(-config.capacity_jitter, config.capacity_jitter)
                )
                for hhp_index in block.hhps:
                    offers.append(
                        ContractOffer(
                            id=next_id,
                            fleet_id=fleet.fleet_id,
                            hhp=Hhp(index=hhp_index, day=prices.day),
                            quantity_kw=capacity,
                            penalty_pence_per_kw=config.penalty_pence_per_kw,
                            bid_pence_per_kw=bid,
                        )
                    )
                    next_id += 1
    return tuple(offers)


@dataclass(frozen=True)
class DayReport:
    """Cleared-day economics plus the per-hhp price context.

    Profits are expectations: platform profit counts every accepted kW at
    the spot price it displaces minus the payment, fleet profit counts
    payment minus bid, both weighted by expected delivered kW. Series hold
    None at hhps without offers (bid extremes) or without acceptances
    (payments). Money is GBP for day totals and pence per kW for unit
    figures; the conversion is a plain divide by 100 of pence totals.
    """

    day: str
    platform_profit_gbp: float
    fleets_profit_gbp: float
    platform_profit_pence_per_expected_kw: float
    fleets_profit_pence_per_expected_kw: float
    expected_delivered_kw: float
    wholesale_topup_cost_gbp: float
    min_bid_series: tuple[float | None, ...]
    max_bid_series: tuple[float | None, ...]
    accepted_payment_series: tuple[float | None, ...]
    spot_series: tuple[float, ...]
    allocation: Allocation = field(repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "day": self.day,
            "platform_profit_gbp": self.platform_profit_gbp,
            "fleets_profit_gbp": self.fleets_profit_gbp,
            "platform_profit_pence_per_expected_kw": self.platform_profit_pence_per_expected_kw,
            "fleets_profit_pence_per_expected_kw": self.fleets_profit_pence_per_expected_kw,
            "expected_delivered_kw": self.expected_delivered_kw,
            "wholesale_topup_cost_gbp": self.wholesale_topup_cost_gbp,
            "accepted_count": len(self.allocation.accepted),
            "eliminated_count": len(self.allocation.eliminated),
            "series": {
                "min_bid_pence_per_kw": list(self.min_bid_series),
                "max_bid_pence_per_kw": list(self.max_bid_series),
                "accepted_payment_pence_per_kw": list(self.accepted_payment_series),
                "spot_pence_per_kw": list(self.spot_series),
            },
        }


def run_day(
    config: SimConfig,
    prices: PriceSeries,
    *,
    offers=None,
    demand: DemandProfile | None = None,
) -> DayReport:
    """Generate (or take) a book, clear it, and summarise the day.

    ``offers`` and ``demand`` override the generated book and the uniform
    demand profile, which lets a caller replay a recorded book through the
    same reporting path.
    """
    partition = partition_peaks_valleys(prices, min_block_hhps=config.min_block_hhps)
    if offers is None:
        offers = generate_fleet_offers(config, prices)
    if demand is None:
        demand = DemandProfile.uniform(config.demand_kw)
    allocation = allocate(offers, demand, partition, prices)

    platform_pence = 0.0
    fleets_pence = 0.0
    expected_kw = 0.0
    payments_by_hhp: dict[int, list[float]] = {}
    for accepted in allocation.accepted:
        t = accepted.offer.hhp.index
        ekw = accepted.offer.expected_kw
        platform_pence += (prices[t] - accepted.payment_pence_per_kw) * ekw
        fleets_pence += (
            accepted.payment_pence_per_kw - accepted.offer.bid_pence_per_kw
        ) * ekw
        expected_kw += ekw
        payments_by_hhp.setdefault(t, []).append(accepted.payment_pence_per_kw)

    peak_indices = {i for b in partition if b.label == "peak" for i in b.hhps}
    topup_pence = sum(
        allocation.residual_demand[t] * prices[t] for t in sorted(peak_indices)
    )

    min_bid: list[float | None] = [None] * HHPS_PER_DAY
    max_bid: list[float | None] = [None] * HHPS_PER_DAY
    for offer in offers:
        t = offer.hhp.index
        b = offer.bid_pence_per_kw
        if min_bid[t] is None or b < min_bid[t]:
            min_bid[t] = b
        if max_bid[t] is None or b > max_bid[t]:
            max_bid[t] = b
    avg_payment: list[float | None] = [
        statistics.fmean(payments_by_hhp[t]) if t in payments_by_hhp else None
        for t in range(HHPS_PER_DAY)
    ]

    per_kw = (lambda pence: pence / expected_kw) if expected_kw > 0 else (lambda pence: 0.0)
    return DayReport(
        day=prices.day,
        platform_profit_gbp=platform_pence / 100.0,
        fleets_profit_gbp=fleets_pence / 100.0,
        platform_profit_pence_per_expected_kw=per_kw(platform_pence),
        fleets_profit_pence_per_expected_kw=per_kw(fleets_pence),
        expected_delivered_kw=expected_kw,
        wholesale_topup_cost_gbp=topup_pence / 100.0,
        min_bid_series=tuple(min_bid),
        max_bid_series=tuple(max_bid),
        accepted_payment_series=tuple(avg_payment),
        spot_series=tuple(prices[t] for t in range(HHPS_PER_DAY)),
        allocation=allocation,
    )


@dataclass(frozen=True)
class SweepPoint:
    """Seed-averaged outcomes at one fleet count; CI spans are 95% normal."""

    fleet_count: int
    platform_profit_gbp_mean: float
    platform_profit_gbp_ci95: float
    fleet_profit_pence_per_kw_mean: float
    fleet_profit_pence_per_kw_ci95: float


@dataclass(frozen=True)
class SweepResult:
    """Competition sweep outcomes, one point per fleet count."""

    points: tuple[SweepPoint, ...]
    seeds: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "seed_count": len(self.seeds),
            "seeds": list(self.seeds),
            "points": [
                {
                    "fleet_count": p.fleet_count,
                    "platform_profit_gbp_mean": p.platform_profit_gbp_mean,
                    "platform_profit_gbp_ci95": p.platform_profit_gbp_ci95,
                    "fleet_profit_pence_per_kw_mean": p.fleet_profit_pence_per_kw_mean,
                    "fleet_profit_pence_per_kw_ci95": p.fleet_profit_pence_per_kw_ci95,
                }
                for p in self.points
            ],
            "deltas": [
                {
                    "from_fleet_count": a.fleet_count,
                    "to_fleet_count": b.fleet_count,
                    "platform_profit_gbp_delta": b.platform_profit_gbp_mean
                    - a.platform_profit_gbp_mean,
                    "fleet_profit_pence_per_kw_delta": b.fleet_profit_pence_per_kw_mean
                    - a.fleet_profit_pence_per_kw_mean,
                }
                for a, b in zip(self.points, self.points[1:])
            ],
        }


def _mean_ci95(values) -> tuple[float, float]:
    """Sample mean and 95% normal-approximation half width."""
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, 0.0
    half = 1.96 * float(np.std(values, ddof=1)) / math.sqrt(len(values))
    return mean, half


def competition_sweep(
    config: SimConfig,
    prices: PriceSeries,
    fleet_counts,
    seeds,
) -> SweepResult:
    """Replay the day across fleet counts and seeds.

    Each count clones the first fleet of ``config`` into that many fleets
    (ids fleet-01, fleet-02, ...) so entry is the only thing changing; each
    seed redraws capacities only.
    """
    if not config.fleets:
        raise ValidationError("the sweep needs a template fleet in config.fleets")
    seeds = tuple(int(s) for s in seeds)
    template = config.fleets[0]
    points = []
    for count in fleet_counts:
        fleets = tuple(
            replace(template, fleet_id=f"fleet-{i + 1:02d}") for i in range(count)
        )
        platform = []
        per_kw = []
        for seed in seeds:
            report = run_day(replace(config, fleets=fleets, rng_seed=seed), prices)
            platform.append(report.platform_profit_gbp)
            per_kw.append(report.fleets_profit_pence_per_expected_kw)
        p_mean, p_ci = _mean_ci95(platform)
        f_mean, f_ci = _mean_ci95(per_kw)
        points.append(
            SweepPoint(
                fleet_count=int(count),
                platform_profit_gbp_mean=p_mean,
                platform_profit_gbp_ci95=p_ci,
                fleet_profit_pence_per_kw_mean=f_mean,
                fleet_profit_pence_per_kw_ci95=f_ci,
            )
        )
    return SweepResult(points=tuple(points), seeds=seeds)


def load_sim_config(path) -> SimConfig:
    """Load a SimConfig from JSON.

    Expected shape::

        {"fleets": [{"fleet_id": "fleet-01", "ev_count": 6,
                     "export_kw_per_ev": 100.0, "extra_cost_pence_per_kw": 3.0}, ...],
         "demand_kw": 3000.0, "penalty_pence_per_kw": 50.0, "rng_seed": 0,
         "capacity_jitter": 0.1, "import_slots_per_hhp": 4, "min_block_hhps": 2}

    Only ``fleets`` (with per-fleet ``fleet_id`` and ``ev_count``) is
    required; everything else falls back to the dataclass defaults.
    """
    with open(path, encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as err:
            raise ValidationError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict) or "fleets" not in raw:
        raise ValidationError(f"{path} must hold a JSON object with a 'fleets' list")
    fleets = []
    for i, row in enumerate(raw["fleets"]):
        try:
            fleets.append(
                FleetProfile(
                    fleet_id=str(row["fleet_id"]),
                    ev_count=int(row["ev_count"]),
                    export_kw_per_ev=float(row.get("export_kw_per_ev", 100.0)),
                    extra_cost_pence_per_kw=float(row.get("extra_cost_pence_per_kw", 3.0)),
                )
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ValidationError(f"fleet row {i} is malformed: {err}") from err
    known = {
        "demand_kw": float,
        "penalty_pence_per_kw": float,
        "rng_seed": int,
        "capacity_jitter": float,
        "import_slots_per_hhp": int,
        "min_block_hhps": int,
    }
    kwargs = {}
    for key, cast in known.items():
        if key in raw:
            try:
                kwargs[key] = cast(raw[key])
            except (TypeError, ValueError) as err:
                raise ValidationError(f"config key {key!r} is malformed: {err}") from err
    return SimConfig(fleets=tuple(fleets), **kwargs)
