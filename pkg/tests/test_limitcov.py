from math import pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnesslab.errors import ConfigError
from harnesslab.limitcov import (
    TABLE_HEADER,
    LimitParams,
    fbm_cov,
    gamma1,
    gamma2,
    psi,
    table_rows,
    z_cov,
    z_cov_matrix,
)

times = st.floats(0.0, 3.0)
places = st.floats(-3.0, 3.0)
nus = st.floats(1e-3, 5.0)


@settings(max_examples=100, deadline=None)
@given(nu2=nus, x=st.floats(-20, 20))
def test_psi_reflection(nu2, x):
    assert psi(nu2, x) - psi(nu2, -x) == pytest.approx(-x, abs=1e-12)
    assert psi(nu2, x) >= 0


def test_psi_special_values():
    assert psi(1.0, 0.0) == pytest.approx(1 / sqrt(2 * pi))
    assert psi(0.0, -2.0) == 2.0 and psi(0.0, 3.0) == 0.0
    assert psi(1e-14, -0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        psi(-1.0, 0.0)


@settings(max_examples=60, deadline=None)
@given(t=times, r=places, s=times, q=places, s1=st.floats(0.1, 2.0))
def test_gamma_routes_agree(t, r, s, q, s1):
    a, b = (t, r), (s, q)
    assert gamma1(a, b, s1) == pytest.approx(gamma1(a, b, s1, "integral"), abs=1e-8)
    assert gamma2(a, b, s1) == pytest.approx(gamma2(a, b, s1, "integral"), abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(t=times, r=places, s=times, q=places)
def test_symmetry(t, r, s, q):
    p = LimitParams(0.7, 1.3, 0.4)
    assert z_cov(p, (t, r), (s, q)) == pytest.approx(z_cov(p, (s, q), (t, r)), abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(pts=st.lists(st.tuples(st.floats(0.01, 3.0), places), min_size=2, max_size=8),
       rho=st.floats(0.0, 5.0))
def test_gram_positive_semidefinite(pts, rho):
    G = z_cov_matrix(LimitParams(0.25, 1.0, rho), pts)
    assert np.linalg.eigvalsh(G).min() >= -1e-9 * max(1.0, np.abs(G).max())


def test_time_zero_row_vanishes():
    p = LimitParams(0.5, 1.0, 2.0)
    assert z_cov(p, (0.0, 0.0), (1.0, 0.3)) == pytest.approx(0.0, abs=1e-15)
    assert gamma1((0.0, 1.0), (0.0, 1.0), 0.5) == 0.0


@pytest.mark.parametrize("s,t", [(0.25, 0.5), (0.5, 1.0), (1.0, 1.0), (0.3, 2.0)])
def test_fbm_special_case(s, t):
    p = LimitParams.stationary(0.25, 2.0)
    assert z_cov(p, (s, 0.0), (t, 0.0)) == pytest.approx(fbm_cov(p, s, t), rel=1e-12)


def test_gamma2_vanishes_for_flat_and_rho_scales():
    pts = [(0.5, 0.0), (1.0, 0.0), (1.0, 1.0)]
    g1 = z_cov_matrix(LimitParams(0.25, 1.0, 0.0), pts)
    g = z_cov_matrix(LimitParams(0.25, 1.0, 3.0), pts)
    g2 = np.array([[gamma2(a, b, 0.25) for b in pts] for a in pts])
    assert np.allclose(g - g1, 3.0 * g2, atol=1e-14)


def test_params_validation():
    for bad in [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, -0.1), (np.nan, 1.0, 1.0)]:
        with pytest.raises(ConfigError):
            LimitParams(*bad)
    with pytest.raises(ConfigError):
        fbm_cov(LimitParams(0.25, 1.0, 1.0), 1.0, 1.0)
    with pytest.raises(ValueError):
        gamma1((1.0, 0.0), (1.0, 0.0), 0.25, route="series")


def test_table_rows():
    p = LimitParams.stationary(0.25, 1.0)
    (row,) = list(table_rows(p, [((0.5, 0.0), (1.0, 1.0))]))
    assert len(row) == len(TABLE_HEADER)
    assert row[-1] == pytest.approx(z_cov(p, (1.0, 1.0), (0.5, 0.0)))
