from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from harnesslab import _backend, _fallback
from harnesslab.errors import ConfigError, DimensionUnsupported, UnsupportedOrder
from harnesslab.noise import (
    NoiseModel,
    NoiseSource,
    derive_key,
    moment,
    require_moment,
    sample_noise,
    standard_normals,
)

from conftest import BACKENDS

# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0, 0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 6, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344, 0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]
FAMILIES = ["gaussian", "rademacher", "uniform", "two-point"]


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("args,expected", KAT)
def test_philox_known_answers(backend, args, expected):
    assert tuple(_backend.get(backend).philox4x32(*args)) == expected


def test_fallback_quantile_matches_scipy():
    from scipy.special import ndtri

    u = np.concatenate([np.linspace(1e-300, 1e-10, 50), np.linspace(1e-6, 1 - 1e-6, 4001),
                        1 - np.logspace(-16, -6, 50)])
    assert np.allclose(_fallback.normal_ppf(u), ndtri(u), rtol=1e-14, atol=1e-14)


@pytest.mark.parametrize("family", FAMILIES)
def test_backends_agree(family):
    if len(BACKENDS) < 2:
        pytest.skip("compiled core not built")
    m = NoiseModel(family, 2.0)
    a = NoiseSource(m, 11, 3, backend="cython").row(5, -1001, 20001)
    b = NoiseSource(m, 11, 3, backend="numpy").row(5, -1001, 20001)
    # identical bits except a rare last-ulp difference in the tail log
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))
    assert np.mean(a == b) > 0.999


@pytest.mark.parametrize("backend", BACKENDS)
def test_row_matches_pointwise(backend):
    src = NoiseSource(NoiseModel("gaussian", 1.0), 3, 0, backend=backend)
    xs = np.arange(-7, 30)
    assert np.array_equal(src.row(4, -7, len(xs)), src.at(4, xs))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), t=st.integers(-2**31, 2**31 - 1), x=st.integers(-2**40, 2**40),
       fam=st.sampled_from(FAMILIES))
def test_determinism(seed, t, x, fam):
    m = NoiseModel(fam, 1.5)
    assert sample_noise(m, seed, t, x) == sample_noise(m, seed, t, x)


@settings(max_examples=30, deadline=None)
@given(lo=st.integers(-10**6, 10**6), n=st.integers(1, 50), cut=st.integers(0, 50))
def test_row_windows_consistent(lo, n, cut):
    src = NoiseSource(NoiseModel("uniform", 1.0), 9, 2)
    full = src.row(3, lo, n + cut)
    assert np.array_equal(src.row(3, lo + cut, n), full[cut:])


def test_rademacher_values():
    v = NoiseSource(NoiseModel("rademacher", 1.0), 1).row(0, 0, 1000)
    assert set(np.unique(v)) == {-1.0, 1.0}


def test_two_point_atoms_and_mean():
    m = NoiseModel("two-point", 1.0, p=0.2)
    a, b, _ = m.params
    assert 0.2 * a + 0.8 * b == pytest.approx(0.0, abs=1e-15)
    v = NoiseSource(m, 4).row(0, 0, 1000)
    assert set(np.unique(v)) == {a, b}


def test_keys_differ_across_streams_and_replicas():
    keys = {derive_key(5, r, s) for r in range(20) for s in range(4)}
    assert len(keys) == 80


@pytest.mark.parametrize("family", FAMILIES)
def test_empirical_moments(family):
    m = NoiseModel(family, 2.0)
    v = NoiseSource(m, 2024, 0).row(1, 0, 1_000_000)
    N = v.size
    m2, m4, m8 = m.moment(2), m.moment(4), m.moment(8)
    assert abs(v.mean()) <= 3 * np.sqrt(m2 / N)
    # rounding slack covers the degenerate rademacher case where Var(v²) = 0
    assert abs((v**2).mean() - m2) <= 3 * np.sqrt((m4 - m2**2) / N) + 1e-12
    assert abs((v**4).mean() - m4) <= 3 * np.sqrt((m8 - m4**2) / N) + 1e-12


def test_moment_examples():
    assert moment(NoiseModel("gaussian", 2.0), 4) == 3 * 4.0
    assert moment(NoiseModel("rademacher", 1.0), 12) == 1.0
    assert moment(NoiseModel("uniform", 1.0), 4) == pytest.approx(9 / 5, rel=1e-15)


@pytest.mark.parametrize("order", [2, 4, 6, 8, 10, 12])
def test_moments_symbolic_oracle(order):
    x = sp.symbols("x", real=True)
    var = sp.Rational(3, 2)
    s = sp.sqrt(var)
    gauss = sp.integrate(x**order * sp.exp(-x**2 / (2 * var)) / sp.sqrt(2 * sp.pi * var), (x, -sp.oo, sp.oo))
    a = sp.sqrt(3) * s
    unif = sp.integrate(x**order / (2 * a), (x, -a, a))
    p = sp.Rational(1, 4)
    two = p * (s * sp.sqrt((1 - p) / p))**order + (1 - p) * (-s * sp.sqrt(p / (1 - p)))**order
    for fam, exact in [("gaussian", gauss), ("uniform", unif), ("two-point", two), ("rademacher", s**order)]:
        got = moment(NoiseModel(fam, 1.5, p=0.25), order)
        assert got == pytest.approx(float(exact), rel=1e-13)


@pytest.mark.parametrize("order", [0, 3, 14, 2.0, "4"])
def test_unsupported_order(order):
    with pytest.raises(UnsupportedOrder):
        moment(NoiseModel(), order)


def test_model_validation_and_json():
    with pytest.raises(ConfigError):
        NoiseModel("cauchy")
    with pytest.raises(ConfigError):
        NoiseModel("gaussian", -1.0)
    with pytest.raises(ConfigError):
        NoiseModel("two-point", 1.0, p=1.0)
    m = NoiseModel("two-point-asymmetric", 2.0, p=0.3)
    assert m.family == "two-point"
    assert NoiseModel.from_dict(m.to_dict()) == m
    with pytest.raises(ConfigError):
        NoiseModel.from_dict({"family": "gaussian", "scale": 1})
    require_moment(m, 12)


def test_lattice_dimension_limit():
    src = NoiseSource(NoiseModel(), 1)
    assert src.at_sites(0, np.array([[1, 2, 3]])).shape == (1,)
    with pytest.raises(DimensionUnsupported):
        src.at_sites(0, np.zeros((1, 4), dtype=int))


def test_standard_normals_reproducible():
    a = standard_normals(7, 3, 100)
    assert np.array_equal(a, standard_normals(7, 3, 100))
    assert not np.array_equal(a, standard_normals(7, 4, 100))
    assert Fraction(float(np.float64(a[0]))) == Fraction(a[0])
