"""Command line behaviour: outputs, manifests, exit codes, formats."""

import csv
import json
import os

import pytest

from v2gmarket.cli import main
from v2gmarket.reporting import sha256_file

REFERENCE_BOOK = [
    {"id": 1, "fleet_id": "hospital", "date": "2026-03-02", "hhp_index": 18,
     "quantity_kw": 20.0, "penalty_pence_per_kw": 50.0, "bid_pence_per_kw": 10.0},
    {"id": 2, "fleet_id": "campus", "date": "2026-03-02", "hhp_index": 18,
     "quantity_kw": 14.0, "penalty_pence_per_kw": 50.0, "bid_pence_per_kw": 6.0},
    {"id": 3, "fleet_id": "hospital", "date": "2026-03-02", "hhp_index": 18,
     "quantity_kw": 16.0, "penalty_pence_per_kw": 50.0, "bid_pence_per_kw": 9.0},
    {"id": 4, "fleet_id": "campus", "date": "2026-03-02", "hhp_index": 18,
     "quantity_kw": 9.0, "penalty_pence_per_kw": 50.0, "bid_pence_per_kw": 20.0},
]


@pytest.fixture
def inputs(tmp_path):
    """Reference book, a 58 p/kWh peak price file, and 35 kW of demand."""
    book = tmp_path / "book.json"
    book.write_text(json.dumps(REFERENCE_BOOK))
    prices = tmp_path / "prices.csv"
    with open(prices, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["date", "hhp_index", "price"])
        for t in range(48):
            w.writerow(["2026-03-02", t, 58.0 if 16 <= t <= 20 else 4.0])
    demand = tmp_path / "demand.csv"
    with open(demand, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["hhp_index", "demand_kw"])
        for t in range(48):
            w.writerow([t, 35.0 if t == 18 else 0.0])
    return book, prices, demand


@pytest.fixture
def sim_config(tmp_path):
    path = tmp_path / "sim.json"
    path.write_text(
        json.dumps(
            {
                "fleets": [
                    {"fleet_id": "fleet-01", "ev_count": 4},
                    {"fleet_id": "fleet-02", "ev_count": 4},
                ],
                "demand_kw": 600.0,
            }
        )
    )
    return path


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(
        json.dumps(
            {
                "hhp_index": 18,
                "expected_demand_kw": 35.0,
                "active_contracts": [
                    {"quantity_kw": 14.0, "success_probability": 0.88},
                    {"quantity_kw": 16.0, "success_probability": 0.82},
                    {"quantity_kw": 20.0, "success_probability": 0.8},
                ],
                "plugged": [
                    {"ev_id": "ev-1", "available_kw": 40.0},
                    {"ev_id": "ev-2", "available_kw": 20.0,
                     "exported_this_hhp_kw": 10.0, "exported_this_peak_kw": 30.0},
                ],
                "config": {"const": 1.0, "c_bd_pence_per_kw": 0.5,
                           "balancing_price_pence_per_kw": 40.0},
            }
        )
    )
    return path


def run(args):
    return main([str(a) for a in args])


def test_allocate_writes_allocation_and_manifest(inputs, tmp_path):
    book, prices, demand = inputs
    out = tmp_path / "out"
    rc = run(["allocate", "--book", book, "--prices", prices, "--demand", demand,
              "--out-dir", out])
    assert rc == 0
    payload = json.loads((out / "allocation.json").read_text())
    assert [row["offer_id"] for row in payload["accepted"]] == [2, 3, 1]
    assert all(row["payment_pence_per_kw"] == 29.0 for row in payload["accepted"])
    assert payload["residual_demand_kw"][18] == 0.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "allocate"
    assert manifest["outputs"] == ["allocation.json"]
    assert manifest["inputs"]["book"] == sha256_file(str(book))
    assert "timestamp" not in json.dumps(manifest).lower()


def test_allocate_csv_format(inputs, tmp_path):
    book, prices, demand = inputs
    out = tmp_path / "out"
    rc = run(["allocate", "--book", book, "--prices", prices, "--demand", demand,
              "--out-dir", out, "--format", "csv"])
    assert rc == 0
    with open(out / "accepted.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["offer_id"] for r in rows] == ["2", "3", "1"]
    assert {p.name for p in out.iterdir()} == {
        "accepted.csv", "residual.csv", "eliminated.csv", "manifest.json",
    }


def test_allocate_gbp_per_mwh_unit(inputs, tmp_path):
    book, prices, demand = inputs
    with open(prices, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["date", "hhp_index", "price"])
        for t in range(48):
            w.writerow(["2026-03-02", t, 580.0 if 16 <= t <= 20 else 40.0])
    out = tmp_path / "out"
    rc = run(["allocate", "--book", book, "--prices", prices, "--demand", demand,
              "--unit", "gbp_per_mwh", "--out-dir", out])
    assert rc == 0
    payload = json.loads((out / "allocation.json").read_text())
    assert all(
        row["payment_pence_per_kw"] == pytest.approx(29.0) for row in payload["accepted"]
    )


def test_malformed_book_row_exits_2(inputs, tmp_path, capsys):
    book, prices, demand = inputs
    rows = json.loads(book.read_text())
    del rows[2]["bid_pence_per_kw"]
    book.write_text(json.dumps(rows))
    rc = run(["allocate", "--book", book, "--prices", prices, "--demand", demand,
              "--out-dir", tmp_path / "out"])
    assert rc == 2
    assert "offer id 3" in capsys.readouterr().err


def test_duplicate_offer_id_exits_2(inputs, tmp_path, capsys):
    book, prices, demand = inputs
    rows = json.loads(book.read_text())
    rows[3]["id"] = 1
    book.write_text(json.dumps(rows))
    rc = run(["allocate", "--book", book, "--prices", prices, "--demand", demand,
              "--out-dir", tmp_path / "out"])
    assert rc == 2
    assert "id 1" in capsys.readouterr().err


def test_semantically_bad_rows_flow_to_intake(inputs, tmp_path):
    book, prices, demand = inputs
    rows = json.loads(book.read_text())
    rows.append({"id": 9, "fleet_id": "x", "date": "2026-03-02", "hhp_index": 18,
                 "quantity_kw": 10.0, "penalty_pence_per_kw": 50.0,
                 "bid_pence_per_kw": 60.0})  # bid above fine: rejected, not fatal
    book.write_text(json.dumps(rows))
    out = tmp_path / "out"
    rc = run(["allocate", "--book", book, "--prices", prices, "--demand", demand,
              "--out-dir", out])
    assert rc == 0
    payload = json.loads((out / "allocation.json").read_text())
    assert {row["offer_id"] for row in payload["eliminated"]} == {9}
    assert "fine" in payload["eliminated"][0]["reason"]


def test_missing_input_file_exits_3(inputs, tmp_path, capsys):
    _, prices, demand = inputs
    rc = run(["allocate", "--book", tmp_path / "nope.json", "--prices", prices,
              "--demand", demand, "--out-dir", tmp_path / "out"])
    assert rc == 3
    assert "i/o error" in capsys.readouterr().err


def test_incomplete_price_file_exits_2(inputs, tmp_path, capsys):
    book, prices, demand = inputs
    lines = prices.read_text().splitlines()
    prices.write_text("\n".join(lines[:-1]) + "\n")  # drop hhp 47
    rc = run(["allocate", "--book", book, "--prices", prices, "--demand", demand,
              "--out-dir", tmp_path / "out"])
    assert rc == 2
    assert "47" in capsys.readouterr().err


def test_simulate_and_report_outputs(sim_config, tmp_path):
    out = tmp_path / "sim"
    rc = run(["simulate", "--config", sim_config, "--seed", "5", "--out-dir", out])
    assert rc == 0
    assert {p.name for p in out.iterdir()} == {
        "day_report.json", "series.json", "manifest.json",
    }
    report = json.loads((out / "day_report.json").read_text())
    assert report["accepted_count"] > 0
    assert len(report["series"]["spot_pence_per_kw"]) == 48

    out2 = tmp_path / "rep"
    rc = run(["report", "--config", sim_config, "--seed", "5", "--out-dir", out2,
              "--format", "csv"])
    assert rc == 0
    assert {p.name for p in out2.iterdir()} == {
        "day_report.json", "series.csv", "day_chart.png", "manifest.json",
    }
    png = (out2 / "day_chart.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"
    with open(out2 / "series.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 48
    manifest = json.loads((out2 / "manifest.json").read_text())
    assert manifest["command"] == "report"
    assert manifest["seed"] == 5
    assert manifest["config"]["prices"]["synthetic_seed"] == 5


def test_report_with_price_file(sim_config, inputs, tmp_path):
    _, prices, _ = inputs
    out = tmp_path / "rep"
    rc = run(["report", "--config", sim_config, "--prices", prices, "--out-dir", out])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert "prices" in manifest["inputs"]
    report = json.loads((out / "day_report.json").read_text())
    assert report["day"] == "2026-03-02"


def test_sweep_outputs(sim_config, tmp_path):
    out = tmp_path / "sweep"
    rc = run(["sweep", "--config", sim_config, "--fleet-counts", "2,3",
              "--num-seeds", "3", "--out-dir", out])
    assert rc == 0
    payload = json.loads((out / "sweep.json").read_text())
    assert [p["fleet_count"] for p in payload["points"]] == [2, 3]
    assert payload["seed_count"] == 3
    assert (out / "sweep_chart.png").exists()
    rc = run(["sweep", "--config", sim_config, "--fleet-counts", "2,x",
              "--num-seeds", "3", "--out-dir", out])
    assert rc == 2


def test_balance_outputs(scenario, tmp_path):
    out = tmp_path / "bal"
    rc = run(["balance", "--scenario", scenario, "--out-dir", out, "--format", "csv"])
    assert rc == 0
    payload = json.loads((out / "balance.json").read_text())
    assert payload["expected_shortfall_kw"] == pytest.approx(2.29792, abs=1e-9)
    assert payload["total_mass"] == pytest.approx(1.0, abs=1e-9)
    assert [p["ev_id"] for p in payload["payments"]] == ["ev-1", "ev-2"]
    with open(out / "shortfall_curve.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [float(r["shortfall_kw"]) for r in rows] == [1.0, 5.0, 15.0, 19.0, 21.0, 35.0]
    assert (out / "shortfall_chart.png").exists()


def test_reruns_are_byte_identical(sim_config, scenario, tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    for out in (first, second):
        assert run(["report", "--config", sim_config, "--seed", "11",
                    "--out-dir", out / "rep", "--format", "csv"]) == 0
        assert run(["balance", "--scenario", scenario, "--out-dir", out / "bal"]) == 0
    for sub in ("rep", "bal"):
        names = sorted(os.listdir(first / sub))
        assert names == sorted(os.listdir(second / sub))
        for name in names:
            assert (first / sub / name).read_bytes() == (second / sub / name).read_bytes(), name
