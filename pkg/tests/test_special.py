import math

import numpy as np
import pytest
import scipy.special as sc
from hypothesis import given
from hypothesis import strategies as st

from mapuq.errors import InvalidInputError
from mapuq.special import (
    gamma_density,
    gamma_quantile,
    gamma_upper_quantile,
    gammainc_lower,
    gammainc_upper,
)

shapes = st.floats(0.5, 1e5)
probs = st.floats(1e-6, 1 - 1e-6)


@given(shapes, st.floats(1e-3, 5.0))
def test_incomplete_gamma_matches_scipy(a, ratio):
    x = a * ratio
    p, q = gammainc_lower(a, x), gammainc_upper(a, x)
    assert p == pytest.approx(sc.gammainc(a, x), rel=1e-10, abs=1e-300)
    assert q == pytest.approx(sc.gammaincc(a, x), rel=1e-10, abs=1e-300)
    assert p + q == pytest.approx(1.0, abs=1e-13)


@given(shapes, probs)
def test_quantile_matches_scipy(a, p):
    x = gamma_quantile(a, p)
    assert x == pytest.approx(sc.gammaincinv(a, p), rel=1e-9)


@given(shapes, st.floats(1e-4, 0.5))
def test_upper_quantile_inverts_upper_tail(a, alpha):
    x = gamma_upper_quantile(a, alpha)
    assert gammainc_upper(a, x) == pytest.approx(alpha, rel=1e-9)


def test_closed_forms():
    # Gamma(1) is the unit exponential; Gamma(k/2) is half a chi-square with k dof
    assert gamma_upper_quantile(1.0, 0.05) == pytest.approx(math.log(20), rel=1e-12)
    assert gamma_upper_quantile(2.0, 0.05) == pytest.approx(9.487729036781154 / 2, rel=1e-10)
    assert gamma_upper_quantile(0.5, 0.05) == pytest.approx(3.841458820694124 / 2, rel=1e-10)
    assert gammainc_lower(1.0, 2.0) == pytest.approx(1 - math.exp(-2), rel=1e-14)
    assert gamma_density(1.0, 0.7) == pytest.approx(math.exp(-0.7), rel=1e-13)


def test_edges_and_errors():
    assert gammainc_lower(3.0, 0.0) == 0.0 and gammainc_upper(3.0, 0.0) == 1.0
    assert gammainc_lower(3.0, math.inf) == 1.0 and gammainc_upper(3.0, math.inf) == 0.0
    for a in (0.0, -1.0, math.nan, math.inf):
        with pytest.raises(InvalidInputError):
            gammainc_lower(a, 1.0)
    for p in (0.0, 1.0, 2.0):
        with pytest.raises(InvalidInputError):
            gamma_quantile(2.0, p)
        with pytest.raises(InvalidInputError):
            gamma_upper_quantile(2.0, p)


def test_far_tails():
    for a in (0.5, 10.0, 1e4, 1e5):
        for p in (1e-10, 1 - 1e-10):
            assert gamma_quantile(a, p) == pytest.approx(sc.gammaincinv(a, p), rel=1e-8)


def test_density_integrates_to_cdf():
    a = 7.5
    xs = np.linspace(1e-6, 12.0, 20001)
    dens = np.array([gamma_density(a, x) for x in xs])
    area = float(np.sum(0.5 * (dens[1:] + dens[:-1]) * np.diff(xs)))
    assert area == pytest.approx(gammainc_lower(a, 12.0), rel=1e-6)
