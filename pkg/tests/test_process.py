import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnesslab import _backend
from harnesslab.errors import WindowTooSmall
from harnesslab.noise import NoiseModel, NoiseSource
from harnesslab.process import (
    DualPlan,
    HeightField,
    IncrementField,
    cone_window,
    dual_evaluate,
    evolve_1d,
    evolve_height,
    evolve_increment,
    hoeffding_radius,
    loglog_slope,
    required_window,
    variance_flat,
    variance_flat_curve,
)

from conftest import BACKENDS, LAZY, THREE_POINT, analysis_of, rel

KERNELS = {"lazy": LAZY, "three": THREE_POINT, "skew": {-1: 0.2, 0: 0.3, 2: 0.5}}


def random_heights(rng, lo, n):
    return HeightField(rng.normal(size=n).cumsum(), (lo,))


@settings(max_examples=40, deadline=None)
@given(kern=st.sampled_from(sorted(KERNELS)), fam=st.sampled_from(["gaussian", "rademacher"]),
       t=st.integers(0, 50), width=st.integers(1, 200), seed=st.integers(0, 2**32), lo=st.integers(-500, 500))
def test_dual_matches_direct(kern, fam, t, width, seed, lo):
    an = analysis_of(KERNELS[kern])
    noise = NoiseSource(NoiseModel(fam, 1.3), seed, 1)
    lo0, hi0 = required_window(an, lo, lo + width - 1, t)
    h0 = random_heights(np.random.default_rng(seed), lo0[0], hi0[0] - lo0[0] + 1)
    direct = evolve_height(h0, an, noise, t, eval_window=(lo, lo + width - 1))
    for x in (lo, lo + width // 2, lo + width - 1):
        assert rel(dual_evaluate(h0, an, noise, t, x), direct.at(x)) <= 1e-8


def test_dual_plan_matches_exact(skew):
    noise = NoiseSource(NoiseModel(), 5, 0)
    targets = [(30, 4), (0, -2), (17, 9), (30, -3)]
    exact = DualPlan(skew, targets, trim_eps=0.0)
    h0 = random_heights(np.random.default_rng(1), exact.init_lo, exact.init_hi - exact.init_lo + 1)
    got = exact.evaluate(h0, noise)
    want = [dual_evaluate(h0, skew, noise, T, y) for T, y in targets]
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12)
    trimmed = DualPlan(skew, targets)
    assert trimmed.noise_draws <= exact.noise_draws
    assert np.allclose(trimmed.evaluate(h0, noise), want, atol=1e-12)
    with pytest.raises(WindowTooSmall):
        trimmed.evaluate(h0.restrict(h0.lo[0] + 5, h0.hi[0]), noise)


@pytest.mark.parametrize("kern", sorted(KERNELS))
def test_constants_and_linearity(kern):
    an = analysis_of(KERNELS[kern])
    rng = np.random.default_rng(0)
    n = 120
    h0 = HeightField(np.full(n, 7.25), (-60,))
    flat = evolve_height(h0, an, None, 20)
    assert np.allclose(flat.values, 7.25, atol=1e-12)
    # linear profiles move with the drift: h_t(x) = x - t μ̄ for h0(x) = x
    ramp = evolve_height(HeightField(np.arange(-60, 60, dtype=float), (-60,)), an, None, 20)
    xs = ramp.sites()[0]
    assert np.allclose(ramp.values, xs + 20 * an.mean[0], atol=1e-10)
    a, b = random_heights(rng, -60, n), random_heights(rng, -60, n)
    noise = NoiseSource(NoiseModel(), 3)
    ha = evolve_height(a, an, noise, 20)
    hb = evolve_height(b, an, None, 20)
    hab = evolve_height(HeightField(a.values + 2 * b.values, (-60,)), an, noise, 20)
    assert np.allclose(hab.values, ha.values + 2 * hb.values, atol=1e-10)


def test_time_telescoping(three_point):
    noise = NoiseSource(NoiseModel("uniform", 1.0), 8)
    h0 = random_heights(np.random.default_rng(3), -100, 201)
    once = evolve_height(h0, three_point, noise, 30)
    twice = evolve_height(evolve_height(h0, three_point, noise, 12), three_point, noise, 18)
    assert twice.lo == once.lo and np.allclose(twice.values, once.values, atol=1e-12)


def test_increments_track_heights(skew):
    noise = NoiseSource(NoiseModel(), 4)
    h0 = random_heights(np.random.default_rng(2), -80, 161)
    ht = evolve_height(h0, skew, noise, 25)
    eta = evolve_increment(IncrementField.from_height(h0), skew, noise, 25)
    ref = IncrementField.from_height(ht)
    assert eta.lo == ref.lo and np.allclose(eta.values, ref.values, atol=1e-11)
    back = ref.to_height(anchor=ht.lo[0], anchor_value=ht.values[0])
    assert np.allclose(back.values, ht.values, atol=1e-11)


def test_increments_in_two_dimensions(plane):
    rng = np.random.default_rng(4)
    h0 = HeightField(rng.normal(size=(30, 30)), (0, 0))
    noise = NoiseSource(NoiseModel(), 9)
    ht = evolve_height(h0, plane, noise, 8)
    eta = evolve_increment(IncrementField.from_height(h0), plane, noise, 8)
    ref = IncrementField.from_height(ht)
    assert np.allclose(eta.values, ref.values, atol=1e-12)
    assert eta.loop_residual() < 1e-12
    bad = IncrementField(eta.values + rng.normal(size=eta.values.shape), eta.lo)
    assert bad.loop_residual() > 0.1
    assert abs(dual_evaluate(h0, plane, noise, 8, (15, 15)) - ht.at((15, 15))) < 1e-10


def test_cone_windows(skew):
    lo, hi = cone_window(skew, -50, 50, 10)
    assert lo == (-40,) and hi == (30,)
    assert required_window(skew, lo, hi, 10) == ((-50,), (50,))
    h0 = HeightField(np.zeros(11), (0,))
    with pytest.raises(WindowTooSmall):
        evolve_height(h0, skew, None, 5)
    with pytest.raises(WindowTooSmall):
        evolve_height(HeightField(np.zeros(101), (-50,)), skew, None, 10, eval_window=(-45, 0))
    with pytest.raises(WindowTooSmall):
        dual_evaluate(h0, skew, None, 4, 5)


@pytest.mark.parametrize("backend", BACKENDS)
def test_backend_parity(backend, three_point):
    noise = NoiseSource(NoiseModel("rademacher", 1.0), 6, backend=backend)
    h = np.random.default_rng(0).normal(size=500)
    ref = evolve_height(HeightField(h, (-250,)), three_point, noise, 100, backend="numpy")
    got = evolve_height(HeightField(h, (-250,)), three_point, noise, 100, backend=backend)
    assert np.allclose(got.values, ref.values, atol=1e-12)
    vals, lo, n = evolve_1d(h.copy(), -250, 0, 100, three_point, noise, [(100, 0), (50, 10), (0, -3)], backend)
    assert vals[0] == pytest.approx(ref.at(0), abs=1e-12)
    assert vals[2] == h[-3 + 250]
    assert (lo, n) == (ref.lo[0], ref.values.size)


def test_variance_flat_values(lazy, three_point):
    assert variance_flat(lazy, 1.0, 1) == 1.0
    assert variance_flat(lazy, 1.0, 2) == 1.5
    assert variance_flat(lazy, 2.0, 0) == 0.0
    curve = variance_flat_curve(three_point, 1.0, [1, 2, 3])
    assert curve == pytest.approx([1.0, 1.375, 1.375 + 0.375**2 + 2 * 0.1875**2 + 2 * 0.125**2])


def test_variance_flat_monte_carlo(three_point):
    t, R = 40, 400
    h0 = HeightField(np.zeros(2 * 2 * t + 1), (-2 * t,))
    vals = [evolve_height(h0, three_point, NoiseSource(NoiseModel(), 0, r), t, eval_window=(0, 0)).values[0]
            for r in range(R)]
    v = np.var(vals, ddof=1)
    exact = variance_flat(three_point, 1.0, t)
    assert abs(v - exact) <= 3 * exact * np.sqrt(2 / (R - 1))


def test_loglog_slope(lazy):
    ts = 2 ** np.arange(6, 13)
    assert loglog_slope(ts, 3 * ts**0.5) == pytest.approx(0.5)
    assert loglog_slope(ts, variance_flat_curve(lazy, 1.0, ts)) == pytest.approx(0.5, abs=0.02)
    assert hoeffding_radius(2, 0, 1e-9) == 0.0


def test_backend_registry():
    assert _backend.get(None).NAME == _backend.NAME in BACKENDS
    with pytest.raises(ValueError):
        _backend.get("fortran")
