"""Offer generation, day reports, competition sweeps, synthetic prices."""

import dataclasses
import json

import numpy as np
import pytest

from v2gmarket import (
    HHPS_PER_DAY,
    FleetProfile,
    SimConfig,
    ValidationError,
    allocate,
    competition_sweep,
    expected_covered_quantity,
    generate_fleet_offers,
    load_sim_config,
    partition_peaks_valleys,
    run_day,
    synthetic_price_series,
)

from conftest import REFERENCE_HHP, make_demand, make_series


def small_config(**overrides):
    base = dict(
        fleets=(FleetProfile("fleet-01", 4), FleetProfile("fleet-02", 4)),
        demand_kw=600.0,
        rng_seed=3,
    )
    base.update(overrides)
    return SimConfig(**base)


def test_synthetic_series_shape_and_determinism():
    a = synthetic_price_series(9)
    b = synthetic_price_series(9)
    assert a == b
    assert len(a.prices) == HHPS_PER_DAY
    # the two bumps top out near hhps 17 and 36
    assert a[17] > a[5] + 5.0
    assert a[36] > a[5] + 3.0
    assert min(a.prices) > 0.0
    negative = synthetic_price_series(9, negative_valleys=True)
    assert min(negative.prices) < 0.0
    assert synthetic_price_series(10) != a


def test_synthetic_series_partitions_into_two_peaks():
    blocks = partition_peaks_valleys(synthetic_price_series(0))
    assert [b.label for b in blocks].count("peak") == 2


def test_profile_validation():
    with pytest.raises(ValidationError):
        FleetProfile("f", -1)
    with pytest.raises(ValidationError):
        FleetProfile("f", 1, export_kw_per_ev=0.0)
    with pytest.raises(ValidationError):
        SimConfig(fleets=(), capacity_jitter=1.5)
    with pytest.raises(ValidationError):
        SimConfig(fleets=(), import_slots_per_hhp=0)


def test_single_ev_bids_cheapest_slot_plus_margin():
    prices = [10.0] * 48
    prices[5] = 1.0
    prices[6] = 1.0
    for t in range(20, 24):
        prices[t] = 20.0
    series = make_series(20.0, peak_hhps=range(20, 24), valley_price=10.0)
    series = dataclasses.replace(series, prices=tuple(prices))
    config = SimConfig(fleets=(FleetProfile("f", 1),))
    offers = generate_fleet_offers(config, series)
    assert offers, "the peak block must attract offers"
    assert {o.bid_pence_per_kw for o in offers} == {4.0}  # 1.0 import + 3.0 margin
    assert {o.hhp.index for o in offers} == set(range(20, 24))


def test_capacity_jitter_bounds_and_seed_behaviour():
    config = small_config()
    offers_a = generate_fleet_offers(config, synthetic_price_series(1))
    offers_b = generate_fleet_offers(config, synthetic_price_series(1))
    assert offers_a == offers_b
    for o in offers_a:
        assert 90.0 <= o.quantity_kw <= 110.0
    reseeded = generate_fleet_offers(
        dataclasses.replace(config, rng_seed=4), synthetic_price_series(1)
    )
    # a new seed moves the quantities and nothing else
    assert {o.bid_pence_per_kw for o in reseeded} == {o.bid_pence_per_kw for o in offers_a}
    assert [o.quantity_kw for o in reseeded] != [o.quantity_kw for o in offers_a]


def test_import_slots_congest_as_fleets_grow():
    series = synthetic_price_series(2)
    lone = SimConfig(fleets=(FleetProfile("a", 1),), import_slots_per_hhp=4)
    crowd = SimConfig(
        fleets=tuple(FleetProfile(f"f-{i}", 8) for i in range(4)),
        import_slots_per_hhp=4,
    )
    cheapest_bid = min(o.bid_pence_per_kw for o in generate_fleet_offers(lone, series))
    crowd_bids = {o.bid_pence_per_kw for o in generate_fleet_offers(crowd, series)}
    # 32 EVs over 4 slots per hhp spread across 8 price rungs
    assert len(crowd_bids) == 8
    assert min(crowd_bids) == cheapest_bid
    assert max(crowd_bids) > cheapest_bid


def test_one_ev_capacity_is_never_sold_twice_per_block():
    config = small_config(demand_kw=5000.0)  # demand high enough to want everything
    series = synthetic_price_series(5)
    report = run_day(config, series)
    seen = set()
    for a in report.allocation.accepted:
        key = (a.offer.fleet_id, a.offer.quantity_kw, a.peak_block.hhps[0])
        assert key not in seen
        seen.add(key)
    # per block each fleet can place at most its EV count
    blocks = [b for b in partition_peaks_valleys(series) if b.label == "peak"]
    for block in blocks:
        for fleet in config.fleets:
            count = sum(
                1
                for a in report.allocation.accepted
                if a.offer.fleet_id == fleet.fleet_id and a.peak_block == block
            )
            assert count <= fleet.ev_count


def test_run_day_report_economics():
    config = small_config()
    series = synthetic_price_series(3)
    report = run_day(config, series)
    allocation = report.allocation
    assert report.day == series.day
    assert report.expected_delivered_kw == pytest.approx(
        expected_covered_quantity(a.offer for a in allocation.accepted)
    )
    platform_pence = sum(
        (series[a.offer.hhp.index] - a.payment_pence_per_kw) * a.offer.expected_kw
        for a in allocation.accepted
    )
    fleet_pence = sum(
        (a.payment_pence_per_kw - a.offer.bid_pence_per_kw) * a.offer.expected_kw
        for a in allocation.accepted
    )
    assert report.platform_profit_gbp == pytest.approx(platform_pence / 100.0)
    assert report.fleets_profit_gbp == pytest.approx(fleet_pence / 100.0)
    assert report.platform_profit_pence_per_expected_kw == pytest.approx(
        platform_pence / report.expected_delivered_kw
    )
    assert report.platform_profit_gbp >= 0.0
    assert report.fleets_profit_gbp >= 0.0
    peak = {t for b in partition_peaks_valleys(series) if b.label == "peak" for t in b.hhps}
    topup = sum(allocation.residual_demand[t] * series[t] for t in sorted(peak))
    assert report.wholesale_topup_cost_gbp == pytest.approx(topup / 100.0)


def test_run_day_series_are_consistent():
    report = run_day(small_config(), synthetic_price_series(3))
    accepted_hhps = {a.offer.hhp.index for a in report.allocation.accepted}
    for t in range(HHPS_PER_DAY):
        low, high = report.min_bid_series[t], report.max_bid_series[t]
        assert (low is None) == (high is None)
        if low is not None:
            assert low <= high
        payment = report.accepted_payment_series[t]
        if t in accepted_hhps:
            assert payment is not None
            assert low <= payment <= report.spot_series[t] + 1e-9
        else:
            assert payment is None
    payload = report.to_dict()
    assert set(payload["series"]) == {
        "min_bid_pence_per_kw",
        "max_bid_pence_per_kw",
        "accepted_payment_pence_per_kw",
        "spot_pence_per_kw",
    }
    assert all(len(s) == HHPS_PER_DAY for s in payload["series"].values())


def test_run_day_accepts_external_book(two_fleet_book):
    offers, demand, partition, series = two_fleet_book
    config = SimConfig(fleets=(FleetProfile("unused", 1),))
    report = run_day(config, series, offers=offers, demand=demand)
    direct = allocate(offers, demand, partition, series)
    assert [a.offer.id for a in report.allocation.accepted] == [
        a.offer.id for a in direct.accepted
    ]
    assert report.accepted_payment_series[REFERENCE_HHP] == 29.0


def test_run_day_with_no_offers():
    config = SimConfig(fleets=(FleetProfile("f", 0),), demand_kw=100.0)
    report = run_day(config, synthetic_price_series(1))
    assert report.expected_delivered_kw == 0.0
    assert report.platform_profit_gbp == 0.0
    assert report.fleets_profit_gbp == 0.0
    assert report.wholesale_topup_cost_gbp > 0.0


def test_competition_sweep_shapes_and_resizing():
    config = small_config()
    series = synthetic_price_series(3)
    result = competition_sweep(config, series, (2, 3), range(4))
    assert [p.fleet_count for p in result.points] == [2, 3]
    assert result.seeds == (0, 1, 2, 3)
    for p in result.points:
        assert p.platform_profit_gbp_ci95 >= 0.0
        assert p.fleet_profit_pence_per_kw_ci95 >= 0.0
    payload = result.to_dict()
    assert payload["seed_count"] == 4
    assert len(payload["deltas"]) == 1
    delta = payload["deltas"][0]
    assert delta["platform_profit_gbp_delta"] == pytest.approx(
        result.points[1].platform_profit_gbp_mean - result.points[0].platform_profit_gbp_mean
    )
    with pytest.raises(ValidationError):
        competition_sweep(SimConfig(fleets=()), series, (2,), range(2))


def test_load_sim_config(tmp_path):
    payload = {
        "fleets": [{"fleet_id": "f-1", "ev_count": 2, "extra_cost_pence_per_kw": 4.0}],
        "demand_kw": 123.0,
        "rng_seed": 7,
    }
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(payload))
    config = load_sim_config(path)
    assert config.fleets[0].extra_cost_pence_per_kw == 4.0
    assert config.fleets[0].export_kw_per_ev == 100.0
    assert config.demand_kw == 123.0
    assert config.rng_seed == 7
    assert config.penalty_pence_per_kw == 50.0

    path.write_text(json.dumps({"fleets": [{"fleet_id": "f-1"}]}))
    with pytest.raises(ValidationError, match="fleet row 0"):
        load_sim_config(path)
    path.write_text("[]")
    with pytest.raises(ValidationError):
        load_sim_config(path)
