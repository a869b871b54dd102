"""Smoke tests for the python bindings.

These exercise the binding layer end to end on small inputs; the C++ test
suite carries the numerical depth.
"""

import cmath
import json
import math
import os
import pathlib

import pytest

import subsweep


def scenario_path(name: str) -> pathlib.Path:
    root = pathlib.Path(os.environ.get("SUBSWEEP_SCENARIOS", "scenarios"))
    return root / name


def test_version():
    assert subsweep.__version__ == "1.0.0"


def test_natural_frequency():
    assert subsweep.natural_frequency(0.75, 1.0, 60.0) == pytest.approx(69.282, abs=1e-3)


def test_lpf_response():
    h40 = subsweep.lpf_response(40.0)
    assert math.degrees(cmath.phase(h40)) == pytest.approx(-60.0, abs=0.5)
    assert abs(subsweep.lpf_response(120.0)) < 1e-10


def test_log_frequency_grid():
    grid = subsweep.log_frequency_grid(0.5, 40.0, 200)
    assert len(grid) == 200
    assert grid[0] == pytest.approx(0.5)
    assert grid[-1] == pytest.approx(40.0)
    assert all(a < b for a, b in zip(grid, grid[1:]))


def test_load_scenario():
    sc = subsweep.load_scenario(str(scenario_path("testbed1.json")))
    assert sc.name == "testbed1"
    assert "Bus1" in sc.buses
    assert sc.nominal_freq_hz == pytest.approx(60.0)
    assert len(subsweep.scenario_hash(sc)) > 0


def test_load_scenario_missing_file():
    with pytest.raises(Exception):
        subsweep.load_scenario(str(scenario_path("does_not_exist.json")))


def test_short_simulation(tmp_path):
    # Resistive divider: 10 pu probe resistor behind a 0.2 + j0.25 pu branch.
    doc = {
        "schema_version": 1,
        "name": "smoke_divider",
        "base_power_w": 4000.0,
        "base_voltage_v": 190.0,
        "nominal_freq_hz": 60.0,
        "buses": ["Src", "Bus1"],
        "branches": [
            {"kind": "series_rl", "from": "Src", "to": "Bus1", "r": 0.2, "x_l": 0.25}
        ],
        "sources": [{"bus": "Src", "kind": "ideal_ac_voltage", "magnitude": 1.0, "phase": 0.0}],
        "probe": {"bus": "Bus1", "r0": 10.0, "signal": {"kind": "zero"}},
        "recorders": [{"bus": "Bus1", "sample_rate": 4000.0}],
        "solver": {"step": 5e-05, "duration": 1.0, "settle": 0.5, "record_rate": 4000.0},
    }
    path = tmp_path / "smoke_divider.json"
    path.write_text(json.dumps(doc))

    sc = subsweep.load_scenario(str(path))
    sim = subsweep.run_simulation(sc)
    assert sim.has_channel("v:Bus1")
    rec = sim.channel("v:Bus1")
    assert rec.sample_rate == pytest.approx(4000.0)

    stats = subsweep.steady_state_check(rec, 0.25, 60.0, 1.0)
    expected = abs(10.0 / (10.2 + 0.25j))
    assert stats.rms == pytest.approx(expected, rel=5e-3)
    assert stats.thd < 0.01

    # The fundamental operating point sees the same divider.
    v = sim.operating_point[sc.buses.index("Bus1")]
    assert abs(v) == pytest.approx(expected, rel=5e-3)


def test_analytic_spectrum_peak():
    sc = subsweep.load_scenario(str(scenario_path("testbed2.json")))
    spectra = subsweep.analytic_spectra(sc, "Bus1", subsweep.log_frequency_grid(1.0, 40.0, 400))
    raw = spectra.raw
    assert len(raw.freqs) == 400
    assert raw.lpf_applied is False
    peaks = subsweep.find_peaks(raw, floor_db=1.0, channel="dd")
    assert peaks, "expected at least one resonance peak"
    best = max(peaks, key=lambda p: p.prominence_db)
    assert 7.5 <= best.freq_hz <= 11.0
