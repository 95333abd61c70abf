import json
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from islandctl import fixtures
from islandctl.grid import (
    Branch, Profile, ScenarioError, dc_flow, interpolate_profile, load_scenario,
    read_profile_csv, scenario_from_dict,
)

T0 = datetime(2024, 8, 2)


def test_minimal_fixture_has_two_buses():
    sc = fixtures.minimal()
    assert len(sc.buses) == 2
    assert sc.gfr.id == "gfr"
    assert [a.id for a in sc.loads] == ["crit_load"]


def test_thirteen_bus_counts():
    sc = fixtures.thirteen_bus()
    assert len(sc.buses) == 13
    assert len(sc.assets) == 26
    assert len(sc.loads) == 14
    assert len(sc.generators) == 8
    assert len(sc.storages) == 4
    assert sum(a.soc_max_kwh for a in sc.storages) == pytest.approx(311.5)
    assert sum(not a.critical for a in sc.loads) == 8


def test_roundtrip_through_json(tmp_path):
    sc = fixtures.thirteen_bus()
    path = tmp_path / "sc.json"
    path.write_text(sc.dumps())
    assert load_scenario(path) == sc


def test_branch_to_missing_bus_names_it():
    doc = json.loads(fixtures.minimal().dumps())
    doc["branches"].append({"from": 1, "to": 99, "susceptance": 1.0, "flow_limit_kw": 1.0})
    with pytest.raises(ScenarioError, match="99"):
        scenario_from_dict(doc)


@pytest.mark.parametrize("mutate, needle", [
    (lambda d: d["assets"].append(dict(d["assets"][1])), "unique"),
    (lambda d: d["params"].update(delta_t_s=1800), "delta_t_s"),
    (lambda d: d["params"].update(ramp_pu_s={"nope": 1.0}), "nope"),
    (lambda d: d["assets"][1].update(profile="missing"), "missing"),
    (lambda d: d["assets"].__setitem__(0, {**d["assets"][0], "kind": "wind"}), "wind"),
])
def test_validation_errors(mutate, needle):
    doc = json.loads(fixtures.minimal().dumps())
    mutate(doc)
    with pytest.raises(ScenarioError, match=needle):
        scenario_from_dict(doc)


def test_disconnected_grid_rejected():
    doc = json.loads(fixtures.minimal().dumps())
    doc["buses"].append({"id": 3})
    with pytest.raises(ScenarioError, match="connected"):
        scenario_from_dict(doc)


def test_invalid_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{\n  \"buses\": [,]\n}")
    with pytest.raises(ScenarioError, match=r"bad.json:2:"):
        load_scenario(p)


def test_profile_csv(tmp_path):
    p = tmp_path / "pv.csv"
    p.write_text("timestamp,value\n2024-08-02T00:00:00,1\n2024-08-02T00:15:00,2.5\n")
    prof = read_profile_csv(p)
    assert prof.id == "pv"
    assert prof.resolution_s == 900
    assert list(prof.values) == [1.0, 2.5]
    p.write_text("timestamp,value\n2024-08-02T00:00:00,1\n2024-08-02T00:15:00,2\n2024-08-02T00:20:00,3\n")
    with pytest.raises(ScenarioError, match="equidistant"):
        read_profile_csv(p)


# -- interpolation ---------------------------------------------------------------

def test_constant_profile_is_fixed_point():
    out = interpolate_profile(Profile("c", T0, 900, [5, 5, 5]), 60)
    assert len(out) == 45  # 15 samples per source step
    assert np.allclose(out.values, 5.0, rtol=0, atol=1e-12)


def test_interpolant_passes_through_knots():
    out = interpolate_profile(Profile("p", T0, 900, [0, 4, 0]), 60)
    assert out.values[15] == 4.0
    assert out.values.max() == 4.0


def test_quadratic_trend_reproduced():
    out = interpolate_profile(Profile("q", T0, 900, [0, 1, 4, 9]), 60, clamp_nonnegative=False)
    x = np.arange(len(out)) / 15.0
    interior = x <= 3
    assert np.max(np.abs(out.values[interior] - x[interior] ** 2)) < 1e-9


def test_interpolation_rejects_non_divisor():
    with pytest.raises(ValueError):
        interpolate_profile(Profile("p", T0, 900, [1, 2]), 7)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=12))
def test_interpolation_keeps_knots_and_span(values):
    p = Profile("p", T0, 900, values)
    out = interpolate_profile(p, 60)
    assert out.end == p.end
    assert np.allclose(out.values[::15], values)
    assert np.all(out.values >= 0)


# -- DC power flow ---------------------------------------------------------------

def test_single_branch_flow():
    angles, flows = dc_flow([1, 2], [Branch(1, 2, 10.0, 100.0)], {1: 1.0, 2: -1.0}, 1)
    assert flows["1-2"] == pytest.approx(1.0)
    assert angles[2] == pytest.approx(-0.1)
    assert angles[1] == 0.0


def test_zero_injection_gives_zero_flow():
    branches = [Branch(1, 2, 3.0, 1.0), Branch(2, 3, 4.0, 1.0)]
    angles, flows = dc_flow([1, 2, 3], branches, {}, 1)
    assert all(v == 0 for v in angles.values())
    assert all(v == 0 for v in flows.values())


def _dense_oracle(n, edges, p, slack):
    # full incidence form: B = A^T diag(b) A, solve with the slack row replaced
    A = np.zeros((len(edges), n))
    b = np.zeros(len(edges))
    for k, (i, j, s) in enumerate(edges):
        A[k, i], A[k, j], b[k] = 1.0, -1.0, s
    B = A.T @ np.diag(b) @ A
    rhs = np.array(p, dtype=float)
    rhs[slack] -= rhs.sum()
    M = B.copy()
    M[slack, :] = 0.0
    M[slack, slack] = 1.0
    rhs[slack] = 0.0
    theta = np.linalg.solve(M, rhs)
    return theta, b * (A @ theta)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=4),
       st.lists(st.floats(0.5, 20), min_size=4, max_size=4))
def test_ring_flow_matches_dense_oracle(inj, sus):
    ring = [(0, 1), (1, 2), (2, 3), (3, 0)]
    branches = [Branch(i + 1, j + 1, s, 1e6) for (i, j), s in zip(ring, sus)]
    angles, flows = dc_flow([1, 2, 3, 4], branches, {i + 1: v for i, v in enumerate(inj)}, 1)
    theta, f = _dense_oracle(4, [(i, j, s) for (i, j), s in zip(ring, sus)], inj, 0)
    assert np.allclose([angles[i + 1] for i in range(4)], theta, atol=1e-8)
    assert np.allclose([flows[br.key] for br in branches], f, atol=1e-8)
