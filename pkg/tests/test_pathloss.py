import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from raresir.pathloss import analytic_pathloss, db_to_linear, linear_to_db


def test_db_to_linear_examples():
    assert db_to_linear(0) == 1.0
    assert db_to_linear(-30) == pytest.approx(0.001, rel=1e-15)
    assert db_to_linear(-13.88) == pytest.approx(10 ** (-1.388), rel=1e-15)
    assert db_to_linear(-13.88) == pytest.approx(0.04093, abs=5e-6)


def test_linear_to_db_examples():
    assert linear_to_db(1) == 0.0
    assert linear_to_db(0.001) == pytest.approx(-30.0, abs=1e-12)
    with pytest.raises(ValueError):
        linear_to_db(0)
    with pytest.raises(ValueError):
        linear_to_db(-1.0)


def test_db_to_linear_rejects_nonfinite():
    with pytest.raises(ValueError):
        db_to_linear(float("nan"))


@given(st.floats(min_value=1e-300, max_value=1e300))
def test_roundtrip(p):
    assert db_to_linear(linear_to_db(p)) == pytest.approx(p, rel=1e-12)


def test_analytic_examples():
    assert analytic_pathloss(0.5, 3) == 1.0
    assert analytic_pathloss(2, 2) == 0.25
    assert analytic_pathloss(1, 7) == 1.0
    assert analytic_pathloss(0, 2) == 1.0


def test_analytic_rejects_bad_input():
    with pytest.raises(ValueError):
        analytic_pathloss(1.0, 0)
    with pytest.raises(ValueError):
        analytic_pathloss(-1.0, 2)


@given(st.floats(min_value=0.1, max_value=8))
def test_analytic_monotone_and_bounded(alpha):
    s = np.linspace(0, 500, 2001)
    ell = analytic_pathloss(s, alpha)
    assert np.all(np.diff(ell) <= 0)
    assert np.all((ell > 0) & (ell <= 1))


def test_arrays_pass_through():
    out = db_to_linear(np.array([0.0, -10.0]))
    assert out.shape == (2,)
    assert out[1] == pytest.approx(0.1)
    assert math.isclose(linear_to_db(np.array([10.0]))[0], 10.0)
