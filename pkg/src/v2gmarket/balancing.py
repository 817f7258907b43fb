"""Real-time balancing settlement around cleared export contracts.

Cleared contracts deliver their full quantity or nothing, each independently
with its own success probability, so the kW actually missing at an hhp (the
shortfall) is a discrete random variable. This module computes that
distribution exactly by enumerating delivery outcomes while the contract
count is small, and on a kW grid by convolution beyond that.

Plugged-in EVs that keep capacity on standby absorb the shortfall and are
paid for it: the expected balancing revenue ``const * price * E[shortfall]``
is split between plugged EVs in proportion to available capacity plus what
they already exported this peak, and EVs additionally receive a battery
degradation fee per kW exported this hhp. ``calibrate_const`` sizes the
``const`` factor so standing by does not out-earn holding a contract.

Money is pence per kW per hhp; quantities and shortfalls are kW.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ValidationError

#: largest contract count settled by exact outcome enumeration
EXACT_ENUMERATION_LIMIT = 20
#: shortfall values are bucketed after rounding to this many decimals
_BUCKET_DECIMALS = 9


@dataclass(frozen=True)
class ActiveContract:
    """A cleared contract as balancing sees it: quantity and delivery odds."""

    quantity_kw: float
    success_probability: float

    def __post_init__(self):
        if not self.quantity_kw > 0 or not math.isfinite(self.quantity_kw):
            raise ValidationError(
                f"contract quantity must be a positive finite kW figure, got {self.quantity_kw}"
            )
        if not 0.0 <= self.success_probability <= 1.0:
            raise ValidationError(
                f"success probability must lie in [0, 1], got {self.success_probability}"
            )


@dataclass(frozen=True)
class ActiveContractSet:
    """The contracts bound to one hhp together with the demand they cover."""

    hhp_index: int
    expected_demand_kw: float
    contracts: tuple[ActiveContract, ...]

    def __post_init__(self):
        if self.expected_demand_kw < 0:
            raise ValidationError(
                f"expected demand must be non-negative, got {self.expected_demand_kw}"
            )

    @classmethod
    def from_offers(cls, hhp_index: int, expected_demand_kw: float, offers):
        """Build from any objects exposing quantity_kw and success_probability."""
        return cls(
            hhp_index=hhp_index,
            expected_demand_kw=expected_demand_kw,
            contracts=tuple(
                ActiveContract(o.quantity_kw, o.success_probability) for o in offers
            ),
        )


@dataclass(frozen=True)
class ShortfallDistribution:
    """Probability mass over shortfall kW, support ascending.

    ``support`` pairs distinct shortfall values (rounded to nanokW for
    bucketing) with their probabilities.
    """

    support: tuple[tuple[float, float], ...]

    def probability(self, shortfall_kw: float) -> float:
        """Mass at one shortfall value, 0 off support."""
        key = round(shortfall_kw, _BUCKET_DECIMALS)
        for y, p in self.support:
            if y == key:
                return p
        return 0.0

    def expected_shortfall(self) -> float:
        """Mean shortfall in kW."""
        total = 0.0
        for y, p in self.support:
            total += y * p
        return total

    def total_mass(self) -> float:
        total = 0.0
        for _, p in self.support:
            total += p
        return total


def _bucket(shortfalls, probabilities) -> ShortfallDistribution:
    """Accumulate (shortfall, probability) pairs in the given order."""
    mass: dict[float, float] = {}
    for y, p in zip(shortfalls, probabilities):
        key = round(y, _BUCKET_DECIMALS)
        mass[key] = mass.get(key, 0.0) + p
    return ShortfallDistribution(support=tuple(sorted(mass.items())))


def shortfall_distribution(
    active: ActiveContractSet, grid_step_kw: float = 1.0
) -> ShortfallDistribution:
    """Distribution of max(0, demand - delivered kW) for one hhp.

    Up to EXACT_ENUMERATION_LIMIT contracts every delivery outcome is
    enumerated, so the result is exact. Beyond that the delivered total is
    convolved on a kW grid of step ``grid_step_kw``; quantities are rounded
    to the nearest grid point, which bounds the shortfall error by half a
    step per contract.
    """
    contracts = active.contracts
    demand = active.expected_demand_kw
    if not contracts or demand <= 0:
        return _bucket([max(0.0, demand)], [1.0])
    n = len(contracts)
    if n <= EXACT_ENUMERATION_LIMIT:
        masks = np.arange(1 << n, dtype=np.int64)
        probability = np.ones(1 << n)
        delivered = np.zeros(1 << n)
        for i, contract in enumerate(contracts):
            succeeded = (masks >> i) & 1 == 1
            probability = probability * np.where(
                succeeded, contract.success_probability, 1.0 - contract.success_probability
            )
            delivered = delivered + np.where(succeeded, contract.quantity_kw, 0.0)
        shortfall = np.maximum(0.0, demand - delivered)
        return _bucket(shortfall.tolist(), probability.tolist())
    if grid_step_kw <= 0:
        raise ValidationError(f"grid step must be positive, got {grid_step_kw}")
    shifts = [int(round(c.quantity_kw / grid_step_kw)) for c in contracts]
    dist = np.zeros(sum(shifts) + 1)
    dist[0] = 1.0
    for shift, contract in zip(shifts, contracts):
        p = contract.success_probability
        shifted = np.zeros_like(dist)
        shifted[shift:] = dist[: len(dist) - shift] if shift else dist
        dist = dist * (1.0 - p) + shifted * p
    delivered_grid = np.arange(len(dist)) * grid_step_kw
    shortfall = np.maximum(0.0, demand - delivered_grid)
    return _bucket(shortfall.tolist(), dist.tolist())


@dataclass(frozen=True)
class PluggedEv:
    """One EV present at the hhp being settled.

    ``available_kw`` is the export capacity the EV held ready this hhp;
    ``exported_this_hhp_kw`` is what it actually discharged (never more than
    it had available); ``exported_this_peak_kw`` is its running total over
    the surrounding peak block, which keeps early exporters in the revenue
    split for the rest of the peak.
    """

    ev_id: str
    available_kw: float
    exported_this_hhp_kw: float = 0.0
    exported_this_peak_kw: float = 0.0

    def __post_init__(self):
        for label, value in (
            ("available", self.available_kw),
            ("exported this hhp", self.exported_this_hhp_kw),
            ("exported this peak", self.exported_this_peak_kw),
        ):
            if value < 0 or not math.isfinite(value):
                raise ValidationError(f"{label} kW must be finite and non-negative, got {value}")
        if self.exported_this_hhp_kw > self.available_kw:
            raise ValidationError(
                f"EV {self.ev_id} exported {self.exported_this_hhp_kw} kW with only "
                f"{self.available_kw} kW available"
            )


@dataclass(frozen=True)
class BalancingConfig:
    """Settlement terms for one hhp.

    Attributes:
        balancing_price_pence_per_kw: system price of uncovered kW.
        battery_cost_pence_per_kw: degradation fee per kW actually exported.
        const_factor: scale on the shortfall revenue pool, normally set by
            calibrate_const so standby pay stays below contract pay.
    """

    balancing_price_pence_per_kw: float
    battery_cost_pence_per_kw: float = 0.0
    const_factor: float = 1.0


def export_share(ev: PluggedEv, plugged) -> float:
    """Fraction of the shortfall revenue pool owed to ``ev``.

    Weights are available kW plus kW already exported this peak. A plugged
    set with zero total weight earns nothing.

    Raises:
        ValidationError: ``ev`` is not a member of ``plugged``.
    """
    plugged = tuple(plugged)
    if ev not in plugged:
        raise ValidationError(f"EV {ev.ev_id} is not in the plugged set being settled")
    weight_total = 0.0
    for member in plugged:
        weight_total += member.available_kw + member.exported_this_peak_kw
    if weight_total == 0.0:
        return 0.0
    return (ev.available_kw + ev.exported_this_peak_kw) / weight_total


def balancing_payment(
    ev: PluggedEv,
    plugged,
    distribution: ShortfallDistribution,
    config: BalancingConfig,
) -> float:
    """Pence owed to ``ev`` for this hhp.

    The shortfall pool pays ``const * price * y`` per shortfall outcome
    ``y``, weighted by its probability and the EV's share; on top of that
    every exported kW earns the battery degradation fee.
    """
    share = export_share(ev, plugged)
    total = 0.0
    for y, p in distribution.support:
        if y > 0:
            total += (
                config.const_factor
                * config.balancing_price_pence_per_kw
                * y
                * p
                * share
            )
    total += ev.exported_this_hhp_kw * config.battery_cost_pence_per_kw
    return total


@dataclass(frozen=True)
class CalibrationScenario:
    """Inputs for sizing the shortfall revenue factor.

    ``benchmark_pence_per_kw`` is what a kW committed through a contract
    earns; calibration aims standby pay per weighted kW at ``target_ratio``
    times that.
    """

    distribution: ShortfallDistribution
    plugged: tuple[PluggedEv, ...]
    balancing_price_pence_per_kw: float
    benchmark_pence_per_kw: float
    target_ratio: float = 1.0


def calibrate_const(scenario: CalibrationScenario, rel_tol: float = 1e-6) -> float:
    """Factor making standby revenue per weighted kW meet the benchmark target.

    Standby revenue is linear in the factor, so bisection converges fast; it
    stops once the revenue is within ``rel_tol`` (relative) of the target.
    With no expected shortfall there is no revenue to scale and the default
    factor 1.0 is returned.

    Raises:
        CalibrationError: the target is unreachable, either because it is
            not positive while any positive factor earns revenue, or because
            the balancing price is not positive while the target is.
    """
    expected = scenario.distribution.expected_shortfall()
    weight_total = sum(
        ev.available_kw + ev.exported_this_peak_kw for ev in scenario.plugged
    )
    if expected <= 0 or weight_total <= 0:
        return 1.0
    slope = scenario.balancing_price_pence_per_kw * expected / weight_total
    target = scenario.target_ratio * scenario.benchmark_pence_per_kw
    if target <= 0:
        raise CalibrationError(
            f"standby revenue is positive for any positive factor, the target "
            f"{target} pence per kW cannot be met"
        )
    if slope <= 0:
        raise CalibrationError(
            f"balancing price {scenario.balancing_price_pence_per_kw} yields no "
            f"shortfall revenue, the target {target} pence per kW cannot be met"
        )
    lo = 0.0
    hi = 1.0
    while hi * slope < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        revenue = mid * slope
        if abs(revenue - target) <= rel_tol * target:
            return mid
        if revenue < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class BalancingScenario:
    """One hhp's balancing inputs as loaded from file."""

    active: ActiveContractSet
    plugged: tuple[PluggedEv, ...]
    config: BalancingConfig


def load_balancing_scenario(path) -> BalancingScenario:
    """Load a balancing scenario from JSON.

    Expected shape::

        {"hhp_index": 18, "expected_demand_kw": 35.0,
         "active_contracts": [{"quantity_kw": 14.0, "success_probability": 0.88}, ...],
         "plugged": [{"ev_id": "ev-1", "available_kw": 50.0,
                      "exported_this_hhp_kw": 0.0, "exported_this_peak_kw": 0.0}, ...],
         "config": {"const": 1.0, "c_bd_pence_per_kw": 0.5,
                    "balancing_price_pence_per_kw": 40.0}}

    Raises:
        ValidationError: a key is missing or a row is malformed; the message
            names the offender.
    """
    with open(path, encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as err:
            raise ValidationError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ValidationError(f"{path} must hold a JSON object at top level")
    for key in ("hhp_index", "expected_demand_kw", "active_contracts", "plugged", "config"):
        if key not in raw:
            raise ValidationError(f"balancing scenario is missing the {key!r} key")
    contracts = []
    for i, row in enumerate(raw["active_contracts"]):
        try:
            contracts.append(
                ActiveContract(
                    quantity_kw=float(row["quantity_kw"]),
                    success_probability=float(row["success_probability"]),
                )
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ValidationError(f"active contract row {i} is malformed: {err}") from err
    plugged = []
    for i, row in enumerate(raw["plugged"]):
        try:
            plugged.append(
                PluggedEv(
                    ev_id=str(row["ev_id"]),
                    available_kw=float(row["available_kw"]),
                    exported_this_hhp_kw=float(row.get("exported_this_hhp_kw", 0.0)),
                    exported_this_peak_kw=float(row.get("exported_this_peak_kw", 0.0)),
                )
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ValidationError(f"plugged EV row {i} is malformed: {err}") from err
    cfg = raw["config"]
    for key in ("const", "c_bd_pence_per_kw", "balancing_price_pence_per_kw"):
        if key not in cfg:
            raise ValidationError(f"balancing config is missing the {key!r} key")
    active = ActiveContractSet(
        hhp_index=int(raw["hhp_index"]),
        expected_demand_kw=float(raw["expected_demand_kw"]),
        contracts=tuple(contracts),
    )
    config = BalancingConfig(
        balancing_price_pence_per_kw=float(cfg["balancing_price_pence_per_kw"]),
        battery_cost_pence_per_kw=float(cfg["c_bd_pence_per_kw"]),
        const_factor=float(cfg["const"]),
    )
    return BalancingScenario(active=active, plugged=tuple(plugged), config=config)
