import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import mid_gap_tau_db, tile_scan_limit

from raresir.pathloss import db_to_linear
from raresir.rare import simulate
from raresir.sampler import UserSample
from raresir.scenario import generate_synthetic, scenario_from_linear
from raresir.sir import (
    ThresholdSpec,
    disconnected_count,
    evaluate_outcome,
    limit_disconnected_mass,
    threshold_lambda,
    total_received,
)


@pytest.mark.parametrize(
    "tau_db, lam, expected",
    [(-50, 2**-12, -13.88), (-60, 0.001, -30.0), (-60, 0.01, -40.0)],
)
def test_threshold_lambda(tau_db, lam, expected):
    db, lin = threshold_lambda(tau_db, lam)
    assert db == pytest.approx(expected, abs=0.005)
    assert lin == pytest.approx(db_to_linear(tau_db) / lam, rel=1e-12)


def test_threshold_needs_positive_density():
    with pytest.raises(ValueError):
        ThresholdSpec(-50, 0)


def _line(values, counts, lam=1.0):
    scn = scenario_from_linear([values])
    return scn, UserSample(np.array([counts], dtype=np.int64), lam)


def test_total_received_examples():
    scn, s = _line([0.001, 0.5], [0, 0])
    assert total_received(s, scn) == 0.0
    scn, s = _line([0.001, 0.5], [1, 0])
    assert total_received(s, scn) == pytest.approx(0.001)
    scn, s = _line([0.25, 0.5], [2, 1])
    assert total_received(s, scn) == 1.0


def test_disconnected_examples():
    thr = ThresholdSpec(10 * math.log10(0.3), 1.0)
    scn, s = _line([0.25, 0.5], [0, 0])
    assert disconnected_count(s, scn, thr) == 0
    scn, s = _line([0.25, 0.5], [1, 0])
    assert disconnected_count(s, scn, thr) == 0
    scn, s = _line([0.5, 0.25, 0.25], [1, 1, 1])
    assert disconnected_count(s, scn, thr) == 2


def test_ties_count_as_connected():
    # two users on equal tiles, tau_lam = 0.5: 0.25 < 0.5 * 0.5 is false
    scn, s = _line([0.25], [2])
    assert disconnected_count(s, scn, ThresholdSpec(10 * math.log10(0.5), 1.0)) == 0


def test_outcome_examples():
    thr = ThresholdSpec(10 * math.log10(0.3), 1.0)
    scn, s = _line([0.5, 0.25, 0.25], [0, 0, 0])
    o = evaluate_outcome(s, scn, thr)
    assert (o.total_users, o.disconnected_users, o.L_value, o.connected_fraction) == (0, 0, 0.0, 1.0)
    scn, s = _line([0.5, 0.25, 0.25], [1, 1, 1])
    o = evaluate_outcome(s, scn, thr)
    assert o.L_value == 2.0
    assert o.connected_fraction == pytest.approx(1 / 3)
    o = evaluate_outcome(s, scn, ThresholdSpec(10 * math.log10(0.3 * 0.5), 0.5))
    assert o.L_value == 4.0  # same tau_lam, L scales with 1/lam


def test_geometry_mismatch():
    scn = scenario_from_linear([[0.5, 0.25]])
    with pytest.raises(ValueError):
        total_received(UserSample(np.zeros((2, 2), np.int64), 1.0), scn)


ells = arrays(float, 6, elements=st.floats(1e-6, 1.0))
counts_st = arrays(np.int64, 6, elements=st.integers(0, 20))


@pytest.mark.filterwarnings("ignore:path-loss grid has positive dB")
@settings(max_examples=200, deadline=None)
@given(ells, counts_st, st.integers(-20, 20), st.floats(1e-3, 2.0))
def test_scale_invariance(ell, counts, k, tau_lam):
    # powers of two scale floating point values exactly
    c = 2.0**k
    thr = ThresholdSpec(10 * math.log10(tau_lam), 1.0)
    a = scenario_from_linear([ell])
    b = scenario_from_linear([ell * c])
    s = UserSample(counts[None, :], 1.0)
    assert disconnected_count(s, a, thr) == disconnected_count(s, b, thr)


@settings(max_examples=200, deadline=None)
@given(ells, counts_st, st.floats(1e-3, 2.0), st.floats(1e-3, 2.0))
def test_monotone_in_tau(ell, counts, t1, t2):
    lo, hi = sorted((t1, t2))
    scn = scenario_from_linear([ell])
    s = UserSample(counts[None, :], 1.0)
    d_lo = disconnected_count(s, scn, ThresholdSpec(10 * math.log10(lo), 1.0))
    d_hi = disconnected_count(s, scn, ThresholdSpec(10 * math.log10(hi), 1.0))
    assert d_lo <= d_hi


@settings(max_examples=200, deadline=None)
@given(ells, counts_st, st.floats(1e-3, 2.0))
def test_near_far_direction(ell, counts, tau_lam):
    # an extra user on the strongest tile never reconnects anybody already there
    scn = scenario_from_linear([ell])
    thr = ThresholdSpec(10 * math.log10(tau_lam), 1.0)
    before = UserSample(counts[None, :], 1.0)
    bumped = counts.copy()
    top = int(np.argmax(ell))
    bumped[top] += 1
    after = UserSample(bumped[None, :], 1.0)
    t_before = tau_lam * float(np.sum(counts * ell))
    t_after = tau_lam * float(np.sum(bumped * ell))
    cut_before = ell < t_before
    cut_after = ell < t_after
    assert np.all(cut_after >= cut_before)
    old_users_cut = int(np.sum(counts * cut_after))
    assert old_users_cut >= disconnected_count(before, scn, thr)
    assert disconnected_count(after, scn, thr) >= disconnected_count(before, scn, thr)


def test_limit_matches_tile_scan(synthetic, small):
    for scn, tau_db in ((synthetic, -40.0), (small, -15.0)):
        expected = tile_scan_limit(scn.free_pathloss.tolist(), scn.free_mass.tolist(), db_to_linear(tau_db))
        assert limit_disconnected_mass(scn, tau_db) == expected


def test_law_of_large_numbers(coarse):
    tau_db, half_gap = mid_gap_tau_db(coarse)
    limit = tile_scan_limit(coarse.free_pathloss.tolist(), coarse.free_mass.tolist(), db_to_linear(tau_db))
    batch = simulate(coarse, 0.5, tau_db, 2024, 0, 4000)
    L = batch.L_values
    se = L.std(ddof=1) / math.sqrt(L.size)
    assert abs(L.mean() - limit) < 3 * se


def test_large_density_approaches_limit():
    scn = generate_synthetic(8, 8, 5.0, alpha=1.5)
    tau_db, _ = mid_gap_tau_db(scn)
    limit = limit_disconnected_mass(scn, tau_db)
    L = simulate(scn, 20.0, tau_db, 1, 0, 50).L_values
    assert np.all(np.abs(L - limit) / limit < 0.05)
