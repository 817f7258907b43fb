"""Shared fixtures: a two-fleet reference book and market builders."""

import pytest

from v2gmarket import (
    ContractOffer,
    DemandProfile,
    Hhp,
    PriceSeries,
    partition_peaks_valleys,
)

REFERENCE_HHP = 18
REFERENCE_SPOT = 29.0
REFERENCE_DEMAND_KW = 35.0


def mk_offer(id, fleet_id, hhp_index, quantity_kw, bid, penalty=50.0):
    """Terse offer builder for tests."""
    return ContractOffer(
        id=id,
        fleet_id=fleet_id,
        hhp=Hhp(index=hhp_index),
        quantity_kw=quantity_kw,
        penalty_pence_per_kw=penalty,
        bid_pence_per_kw=bid,
    )


def make_series(peak_price, peak_hhps=range(16, 21), valley_price=2.0, day="2026-03-02"):
    """Flat series with one rectangular peak; peak hhps must stay consecutive."""
    prices = [valley_price] * 48
    for t in peak_hhps:
        prices[t] = peak_price
    return PriceSeries(day=day, market="day_ahead", prices=tuple(prices))


def make_series_from(prices, day="2026-03-02"):
    return PriceSeries(day=day, market="day_ahead", prices=tuple(prices))


def make_demand(kw_by_hhp):
    """DemandProfile from a {hhp: kw} dict, zero elsewhere."""
    return DemandProfile(kw=tuple(float(kw_by_hhp.get(t, 0.0)) for t in range(48)))


@pytest.fixture
def two_fleet_book():
    """Four offers from two fleets at one peak hhp; wholesale sits at 29.

    Clearing this book against 35 kW of demand must accept offers 2, 3, 1
    in that order, pay 29 each, and cover 41.44 expected kW.
    """
    offers = (
        mk_offer(1, "hospital", REFERENCE_HHP, 20.0, 10.0),
        mk_offer(2, "campus", REFERENCE_HHP, 14.0, 6.0),
        mk_offer(3, "hospital", REFERENCE_HHP, 16.0, 9.0),
        mk_offer(4, "campus", REFERENCE_HHP, 9.0, 20.0),
    )
    series = make_series(REFERENCE_SPOT)
    partition = partition_peaks_valleys(series)
    demand = make_demand({REFERENCE_HHP: REFERENCE_DEMAND_KW})
    return offers, demand, partition, series
