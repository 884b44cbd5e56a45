import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnesslab.errors import ConfigError, WindowTooSmall
from harnesslab.initialdata import (
    FlatLaw,
    IIDLaw,
    MALaw,
    Pi0Law,
    law_from_dict,
    mixing_certificate,
    require_moments,
    rho0,
    sample_initial,
)
from harnesslab.invariant import StationarySampler, v0
from harnesslab.noise import NoiseModel


@pytest.fixture(scope="module")
def laws():
    from conftest import THREE_POINT, analysis_of

    an = analysis_of(THREE_POINT)
    return {
        "iid": IIDLaw(NoiseModel("gaussian", 2.0), 0.5),
        "ma": MALaw((1.0, 1.0), NoiseModel("rademacher", 1.0), -0.25),
        "pi0": Pi0Law(StationarySampler(an, NoiseModel("gaussian", 1.0), K=200), 0.1),
        "flat": FlatLaw(0.3),
    }


def test_rho0_values(lazy):
    assert rho0(IIDLaw(NoiseModel("gaussian", 2.0))) == 2.0
    assert rho0(MALaw((1.0, 1.0), NoiseModel())) == 4.0
    assert rho0(Pi0Law(StationarySampler(lazy, NoiseModel(), K=10))) == pytest.approx(4.0)
    assert rho0(FlatLaw(1.0)) == 0.0


def test_ma_covariances():
    law = MALaw((1.0, 1.0), NoiseModel("gaussian", 3.0))
    assert [law.cov(l) for l in (0, 1, -1, 2)] == [6.0, 3.0, 3.0, 0.0]
    assert law.max_lag() == 1 and law.sigma0_sq == 6.0
    assert sum(law.cov(l) for l in range(-1, 2)) == rho0(law)
    with pytest.raises(ConfigError):
        MALaw((), NoiseModel())


def test_pi0_covariance_sums_to_rho0(lazy, three_point):
    law = Pi0Law(StationarySampler(three_point, NoiseModel(), K=None, method="spectral"))
    L = law.max_lag()
    assert 5 < L < 400
    assert sum(law.cov(l) for l in range(-L, L + 1)) == pytest.approx(rho0(law), abs=1e-9)
    assert law.cov(0) == pytest.approx(v0(three_point, 1.0, 0), abs=1e-10)


@pytest.mark.parametrize("name", ["iid", "ma", "pi0", "flat"])
def test_heights_and_increments(laws, name):
    law = laws[name]
    eta, h = sample_initial(law, (-20, 30), seed=4, replica=2)
    assert eta.lo == (-20,) and h.lo == (-21,) and h.hi == (30,)
    assert h.at(0) == 0.0
    assert np.allclose(np.diff(h.values), eta.eta, atol=1e-12)
    if name == "pi0":
        return  # the Gaussian tail block of the pi0 sampler is drawn per window
    far_eta, far_h = sample_initial(law, (10, 30), seed=4, replica=2)
    assert np.allclose(far_eta.eta, eta.eta[30:], atol=1e-12)
    assert np.allclose(far_h.values, h.values[30:], atol=1e-12)


def test_flat_law_is_deterministic():
    eta, h = sample_initial(FlatLaw(0.5), (-3, 3))
    assert np.all(eta.eta == 0.5)
    assert np.allclose(h.values, 0.5 * np.arange(-4, 4))


@settings(max_examples=25, deadline=None)
@given(lo=st.integers(-300, 300), n=st.integers(1, 40), cut=st.integers(0, 40), name=st.sampled_from(["iid", "ma"]))
def test_window_independence(laws, lo, n, cut, name):
    law = laws[name]
    a, _ = sample_initial(law, (lo, lo + n + cut), 9, 0)
    b, _ = sample_initial(law, (lo + cut, lo + n + cut), 9, 0)
    assert np.array_equal(a.eta[cut:], b.eta)


@pytest.mark.parametrize("name", ["iid", "ma"])
def test_stationary_moments(laws, name):
    law = laws[name]
    x = np.array([sample_initial(law, (100, 104), 1, r)[0].eta for r in range(4000)]) - law.mu0
    for lag in (0, 1, 2):
        prod = x[:, 0] * x[:, lag]
        assert abs(prod.mean() - law.cov(lag)) <= 3 * prod.std(ddof=1) / np.sqrt(len(prod))
    a = x[:, 0]
    assert abs(a.mean()) <= 3 * a.std(ddof=1) / np.sqrt(len(a))


@pytest.mark.parametrize("name", ["iid", "ma", "pi0"])
def test_position_stationarity(laws, name):
    law = laws[name]
    R = 2000
    a = np.array([sample_initial(law, (0, 50), 3, r)[0].eta for r in range(R)]) - law.mu0
    b = np.array([sample_initial(law, (200, 250), 3, r)[0].eta for r in range(R)]) - law.mu0
    for lag in (0, 1):
        pa, pb = a[:, 25] * a[:, 25 + lag], b[:, 25] * b[:, 25 + lag]
        se = np.sqrt(pa.var(ddof=1) / R + pb.var(ddof=1) / R)
        assert abs(pa.mean() - pb.mean()) <= 3 * se


def test_empty_window(laws):
    with pytest.raises(WindowTooSmall):
        sample_initial(laws["iid"], (3, 2))


def test_mixing_certificates(laws):
    for name in ("iid", "ma", "flat", "pi0"):
        cert = mixing_certificate(laws[name], 0.5)
        assert cert["satisfies_thm31"] is True and cert["satisfies_thm34"] is True
    nongauss = Pi0Law(StationarySampler(laws["pi0"].sampler.analysis, NoiseModel("rademacher"), K=10))
    cert = mixing_certificate(nongauss, 0.5)
    assert cert["satisfies_thm31"] is None and cert["satisfies_thm34"] is None and cert["note"]
    with pytest.raises(ConfigError):
        mixing_certificate(laws["iid"], 0.0)


def test_require_moments(laws):
    # every supported family has all moments, so only malformed orders fail
    for law in laws.values():
        require_moments(law, 12)


@pytest.mark.parametrize("name", ["iid", "ma", "pi0", "flat"])
def test_json_round_trip(laws, name):
    law = laws[name]
    d = json.loads(json.dumps(law.to_dict()))
    s = getattr(law, "sampler", None)
    again = law_from_dict(d, s and s.analysis, s and s.noise)
    assert again.to_dict() == law.to_dict()
    assert rho0(again) == pytest.approx(rho0(law))


def test_law_from_dict_errors(three_point):
    for bad in [{}, {"variant": "ar1"}, {"variant": "iid", "sigma": 1}, {"variant": "ma"}]:
        with pytest.raises(ConfigError):
            law_from_dict(bad)
    with pytest.raises(ConfigError):
        law_from_dict({"variant": "pi0"})
    law = law_from_dict({"variant": "pi0", "K": 50}, three_point, NoiseModel())
    assert law.sampler.K == 50 and law.sampler.method == "series"
