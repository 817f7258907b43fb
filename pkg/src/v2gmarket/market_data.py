"""Price and demand intake plus the peak/valley partition of a trading day.

Everything downstream works in a single internal unit: pence per kW per
half-hour period (hhp). A trading day always has 48 hhps. Two input units
are accepted and converted once at intake:

* ``pence_per_kwh``  - a kW sustained for one hhp moves 0.5 kWh, factor 0.5
* ``gbp_per_mwh``    - 1 GBP/MWh equals 0.1 pence/kWh, factor 0.05

Negative prices are legal everywhere; they show up in real day-ahead data
and the rest of the engine is written to cope with them.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

from .errors import IncompleteSeriesError, ValidationError

HHPS_PER_DAY = 48

#: multiply an input price by this to get pence per kW per hhp
UNIT_FACTORS = {
    "pence_per_kwh": 0.5,
    "gbp_per_mwh": 0.05,
}


def to_internal_price(value: float, unit: str) -> float:
    """Convert ``value`` in ``unit`` to pence per kW per hhp."""
    try:
        return value * UNIT_FACTORS[unit]
    except KeyError:
        raise ValidationError(
            f"unknown price unit {unit!r}; expected one of {sorted(UNIT_FACTORS)}"
        ) from None


def from_internal_price(value: float, unit: str) -> float:
    """Invert :func:`to_internal_price`. Round-trips exactly up to float division."""
    try:
        return value / UNIT_FACTORS[unit]
    except KeyError:
        raise ValidationError(
            f"unknown price unit {unit!r}; expected one of {sorted(UNIT_FACTORS)}"
        ) from None


@dataclass(frozen=True)
class PriceSeries:
    """One market's prices for one trading day, already in internal units.

    Attributes:
        day: ISO date the series belongs to.
        market: free-form market label, e.g. ``day_ahead`` or ``balancing``.
        prices: 48 prices in pence per kW per hhp, index = hhp index.
    """

    day: str
    market: str
    prices: tuple[float, ...]

    def __post_init__(self):
        if len(self.prices) != HHPS_PER_DAY:
            raise ValidationError(
                f"a price series needs {HHPS_PER_DAY} entries, got {len(self.prices)}"
            )

    def __getitem__(self, hhp_index: int) -> float:
        return self.prices[hhp_index]

    def mean(self) -> float:
        return sum(self.prices) / HHPS_PER_DAY


@dataclass(frozen=True)
class PeakBlock:
    """A maximal run of consecutive hhps labelled peak or valley."""

    label: str
    hhps: tuple[int, ...]

    def __post_init__(self):
        if self.label not in ("peak", "valley"):
            raise ValidationError(f"block label must be peak or valley, got {self.label!r}")
        if not self.hhps:
            raise ValidationError("a block cannot be empty")
        for a, b in zip(self.hhps, self.hhps[1:]):
            if b != a + 1:
                raise ValidationError(f"block hhps must be consecutive, got {self.hhps}")


@dataclass(frozen=True)
class DemandProfile:
    """Expected uncovered demand in kW for each hhp of the day."""

    kw: tuple[float, ...]

    def __post_init__(self):
        if len(self.kw) != HHPS_PER_DAY:
            raise ValidationError(
                f"a demand profile needs {HHPS_PER_DAY} entries, got {len(self.kw)}"
            )
        for i, value in enumerate(self.kw):
            if value < 0:
                raise ValidationError(f"demand must be non-negative, got {value} at hhp {i}")

    @classmethod
    def uniform(cls, kw: float) -> "DemandProfile":
        return cls(kw=(float(kw),) * HHPS_PER_DAY)

    def __getitem__(self, hhp_index: int) -> float:
        return self.kw[hhp_index]


def load_price_series(
    path,
    market: str = "day_ahead",
    unit: str = "pence_per_kwh",
) -> PriceSeries:
    """Read one day of prices from a CSV file with columns date, hhp_index, price.

    The file must contain exactly one calendar date and all 48 hhp rows.

    Raises:
        ValidationError: non-numeric field (reported with its line number),
            duplicate hhp row, more than one date, or bad hhp index.
        IncompleteSeriesError: fewer than 48 hhps; the message names the gaps.
    """
    if unit not in UNIT_FACTORS:
        raise ValidationError(
            f"unknown price unit {unit!r}; expected one of {sorted(UNIT_FACTORS)}"
        )
    rows: dict[int, float] = {}
    day: str | None = None
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        required = {"date", "hhp_index", "price"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValidationError(
                f"{path}: price CSV must have columns date, hhp_index, price"
            )
        for row in reader:
            line = reader.line_num
            try:
                idx = int(row["hhp_index"])
                price = float(row["price"])
            except (TypeError, ValueError):
                raise ValidationError(
                    f"{path}: line {line}: could not parse hhp_index/price "
                    f"({row['hhp_index']!r}, {row['price']!r})"
                ) from None
            if not 0 <= idx < HHPS_PER_DAY:
                raise ValidationError(
                    f"{path}: line {line}: hhp_index {idx} outside 0..{HHPS_PER_DAY - 1}"
                )
            if idx in rows:
                raise ValidationError(f"{path}: line {line}: duplicate hhp_index {idx}")
            if day is None:
                day = row["date"]
            elif row["date"] != day:
                raise ValidationError(
                    f"{path}: line {line}: second date {row['date']!r} in a one-day file"
                )
            rows[idx] = to_internal_price(price, unit)
    missing = tuple(i for i in range(HHPS_PER_DAY) if i not in rows)
    if missing:
        raise IncompleteSeriesError(
            f"{path}: price series incomplete, missing hhp indices {list(missing)}",
            missing=missing,
        )
    return PriceSeries(day=day or "", market=market, prices=tuple(rows[i] for i in range(HHPS_PER_DAY)))


def load_demand_profile(path) -> DemandProfile:
    """Read a demand profile CSV with columns hhp_index, demand_kw.

    Unlisted hhps default to zero demand with a warning. Negative demand is a
    hard error naming the offending row.
    """
    values = [0.0] * HHPS_PER_DAY
    seen: set[int] = set()
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        required = {"hhp_index", "demand_kw"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValidationError(
                f"{path}: demand CSV must have columns hhp_index, demand_kw"
            )
        for row in reader:
            line = reader.line_num
            try:
                idx = int(row["hhp_index"])
                demand = float(row["demand_kw"])
            except (TypeError, ValueError):
                raise ValidationError(
                    f"{path}: line {line}: could not parse hhp_index/demand_kw "
                    f"({row['hhp_index']!r}, {row['demand_kw']!r})"
                ) from None
            if not 0 <= idx < HHPS_PER_DAY:
                raise ValidationError(
                    f"{path}: line {line}: hhp_index {idx} outside 0..{HHPS_PER_DAY - 1}"
                )
            if demand < 0:
                raise ValidationError(
                    f"{path}: line {line}: negative demand {demand} at hhp {idx}"
                )
            if idx in seen:
                raise ValidationError(f"{path}: line {line}: duplicate hhp_index {idx}")
            seen.add(idx)
            values[idx] = demand
    missing = sorted(set(range(HHPS_PER_DAY)) - seen)
    if missing:
        warnings.warn(
            f"{path}: no demand rows for hhps {missing}; defaulting them to 0 kW",
            stacklevel=2,
        )
    return DemandProfile(kw=tuple(values))


def partition_peaks_valleys(series: PriceSeries, min_block_hhps: int = 2) -> tuple[PeakBlock, ...]:
    """Split the day into alternating peak and valley blocks.

    An hhp is provisionally a peak when its price is strictly above the daily
    mean (ties go to valley). Runs shorter than ``min_block_hhps`` are then
    merged into whichever neighbouring run has the nearer mean price, until
    every remaining run is long enough or only one run is left. The labels
    only depend on price order and spread, so any positive affine rescaling
    of the series yields the same partition.
    """
    if min_block_hhps < 1:
        raise ValidationError(f"min_block_hhps must be at least 1, got {min_block_hhps}")
    mean = series.mean()
    labels = ["peak" if p > mean else "valley" for p in series.prices]

    def to_runs(lab: list[str]) -> list[list[int]]:
        runs: list[list[int]] = []
        for i, l in enumerate(lab):
            if runs and lab[runs[-1][0]] == l:
                runs[-1].append(i)
            else:
                runs.append([i])
        return runs

    runs = to_runs(labels)
    while len(runs) > 1:
        short = [r for r in runs if len(r) < min_block_hhps]
        if not short:
            break
        run = min(short, key=len)  # shortest first, leftmost on ties
        pos = runs.index(run)
        run_mean = sum(series.prices[i] for i in run) / len(run)
        neighbours = []
        if pos > 0:
            neighbours.append(runs[pos - 1])
        if pos + 1 < len(runs):
            neighbours.append(runs[pos + 1])
        target = min(
            neighbours,
            key=lambda r: abs(sum(series.prices[i] for i in r) / len(r) - run_mean),
        )
        for i in run:
            labels[i] = labels[target[0]]
        runs = to_runs(labels)

    return tuple(
        PeakBlock(label=labels[r[0]], hhps=tuple(r)) for r in to_runs(labels)
    )
