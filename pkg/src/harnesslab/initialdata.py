"""Initial increment laws for the fluctuation experiments (d = 1).

Four variants are provided, each carrying its analytic mean ``μ0``, variance
``σ0²`` and covariance sum ``ρ0 = Σ_x Cov(η0(0), η0(x))``:

* ``iid``   i.i.d. increments ``μ0 + ζ(x)``, so ``ρ0 = σ0²``;
* ``ma``    finite moving averages ``μ0 + Σ_j c_j ζ(x - j)``, which are
  ``m``-dependent (mixing coefficients vanish beyond lag ``m``) and have
  ``ρ0 = σζ² (Σ c_j)²``;
* ``pi0``   the minimal-variance invariant law, ``ρ0 = σξ²/σ1²``;
* ``flat``  deterministic ``η0 ≡ μ0``, ``ρ0 = 0``.

Innovations are read from the keyed generator at time 0 on the ``initial``
stream, so the value at a site does not depend on the sampled window.
"""

from dataclasses import dataclass, field

import numpy as np

from . import noise as _noise
from .errors import ConfigError, WindowTooSmall
from .noise import NoiseModel
from .process import HeightField, IncrementField

VARIANTS = ("iid", "ma", "pi0", "flat")


@dataclass(frozen=True)
class IIDLaw:
    dist: NoiseModel
    mu0: float = 0.0
    variant = "iid"

    @property
    def sigma0_sq(self):
        return self.dist.variance

    def cov(self, lag):
        return self.dist.variance if lag == 0 else 0.0

    def max_lag(self):
        return 0

    def to_dict(self):
        return {"variant": "iid", "mu0": self.mu0, "dist": self.dist.to_dict()}


@dataclass(frozen=True)
class MALaw:
    """``η0(x) = μ0 + Σ_{j=0}^m c_j ζ(x - j)`` with i.i.d. innovations ``ζ``."""

    coeffs: tuple
    innovation: NoiseModel
    mu0: float = 0.0
    variant = "ma"

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if not c or not all(np.isfinite(c)):
            raise ConfigError("moving-average coefficients must be a nonempty finite list")
        object.__setattr__(self, "coeffs", c)

    @property
    def m(self):
        return len(self.coeffs) - 1

    @property
    def sigma0_sq(self):
        return self.cov(0)

    def cov(self, lag):
        lag = abs(int(lag))
        c = np.array(self.coeffs)
        if lag > self.m:
            return 0.0
        return self.innovation.variance * float(c[: len(c) - lag] @ c[lag:])

    def max_lag(self):
        return self.m

    def to_dict(self):
        return {"variant": "ma", "mu0": self.mu0, "coeffs": list(self.coeffs),
                "innovation": self.innovation.to_dict()}


@dataclass
class Pi0Law:
    """Increments drawn from a ``StationarySampler`` (mean ``μ0`` added).

    ``cov`` reports the covariance of the (possibly truncated) sampled law.
    """

    sampler: object
    mu0: float = 0.0
    variant = "pi0"
    _cov: dict = field(default_factory=dict, repr=False)

    @property
    def noise(self):
        return self.sampler.noise

    @property
    def sigma0_sq(self):
        return self.cov(0)

    def cov(self, lag):
        from .invariant import block_covariance

        lag = abs(int(lag))
        if lag not in self._cov:
            s = self.sampler
            self._cov[lag] = block_covariance(s.analysis, s.noise.variance, lag, 0, s.K)
        return self._cov[lag]

    def max_lag(self, rel=1e-15, cap=400):
        """First lag beyond which ``|cov|`` stays below ``rel · cov(0)`` (exponential decay)."""
        c0 = self.cov(0)
        run = 0
        for lag in range(1, cap + 1):
            run = run + 1 if abs(self.cov(lag)) < rel * c0 else 0
            if run == 4:
                return lag - 4
        return cap

    def to_dict(self):
        s = self.sampler
        return {"variant": "pi0", "mu0": self.mu0, "K": s.K, "method": s.method,
                "explicit_depth": s.explicit_depth}


@dataclass(frozen=True)
class FlatLaw:
    mu0: float = 0.0
    variant = "flat"
    sigma0_sq = 0.0

    def cov(self, lag):
        return 0.0

    def max_lag(self):
        return 0

    def to_dict(self):
        return {"variant": "flat", "mu0": self.mu0}


def rho0(law):
    """Analytic ``ρ0`` of a law."""
    if law.variant == "iid":
        return law.dist.variance
    if law.variant == "ma":
        return law.innovation.variance * sum(law.coeffs) ** 2
    if law.variant == "pi0":
        an = law.sampler.analysis
        return law.sampler.noise.variance / an.sigma1_sq
    return 0.0


def require_moments(law, order):
    """Check the innovation (or noise) family has a finite moment of ``order``."""
    model = {"iid": getattr(law, "dist", None), "ma": getattr(law, "innovation", None),
             "pi0": getattr(law, "noise", None)}.get(law.variant)
    if model is not None:
        _noise.require_moment(model, order)


def _increments(law, lo, hi, seed, replica):
    n = hi - lo + 1
    if law.variant == "flat":
        return np.full(n, float(law.mu0))
    if law.variant == "iid":
        src = _noise.NoiseSource(law.dist, seed, replica, _noise.STREAM_INITIAL)
        return law.mu0 + src.row(0, lo, n)
    if law.variant == "ma":
        m = law.m
        src = _noise.NoiseSource(law.innovation, seed, replica, _noise.STREAM_INITIAL)
        z = src.row(0, lo - m, n + m)
        out = np.full(n, float(law.mu0))
        for j, c in enumerate(law.coeffs):
            out += c * z[m - j: m - j + n]
        return out
    return law.mu0 + law.sampler.sample(lo, hi, seed, replica)


def sample_initial(law, window, seed=0, replica=0):
    """Draw ``η0`` on the inclusive window ``(lo, hi)`` and its heights.

    Returns
    -------
    eta0 : IncrementField
        ``η0(x) = h0(x) - h0(x - 1)`` for ``x = lo .. hi``.
    h0 : HeightField
        Heights on ``lo - 1 .. hi`` normalized by ``h0(0) = 0``.  When the
        window does not reach the origin the connecting increments are drawn
        too (from the same keyed field), so ``h0`` is the restriction of one
        global height function.
    """
    lo, hi = int(window[0]), int(window[1])
    if hi < lo:
        raise WindowTooSmall("empty initial window")
    a, b = min(lo, 1), max(hi, 0)
    # one draw over the hull of window and origin (the π0 Gaussian block is window-tied)
    eta_all = _increments(law, a, b, seed, replica)
    h_all = np.concatenate([[0.0], np.cumsum(eta_all)])  # sites a-1 .. b
    h_all -= h_all[0 - (a - 1)]
    i0 = lo - a
    eta = eta_all[i0: i0 + hi - lo + 1]
    h = h_all[i0: i0 + hi - lo + 2]
    return IncrementField.from_1d(eta.copy(), lo), HeightField(h.copy(), (lo - 1,), 0)


def mixing_certificate(law, delta):
    """Whether the law meets the mixing-rate conditions of the fluctuation theorems.

    ``satisfies_thm31`` refers to ``Σ (j+1)^{2/δ} α(j) < ∞`` and
    ``satisfies_thm34`` to the stronger ``(j+1)^{10+132/δ}`` version.  Values
    are ``True``, ``False`` or ``None`` (unknown).
    """
    if not delta > 0:
        raise ConfigError("delta must be positive")
    if law.variant in ("iid", "flat"):
        return {"satisfies_thm31": True, "satisfies_thm34": True,
                "note": "independent increments: alpha(j) = 0 for j >= 1"}
    if law.variant == "ma":
        return {"satisfies_thm31": True, "satisfies_thm34": True,
                "note": f"{law.m}-dependent: alpha(j) = 0 for j > {law.m}"}
    if law.noise.family == "gaussian":
        return {"satisfies_thm31": True, "satisfies_thm34": True,
                "note": "gaussian stationary sequence with exponentially decaying covariance"}
    return {"satisfies_thm31": None, "satisfies_thm34": None,
            "note": "mixing rate of the invariant law is unknown for non-gaussian noise"}


def law_from_dict(d, analysis=None, noise=None):
    """Build a law from ``{"variant": ..., ...}``.

    ``pi0`` needs the experiment's kernel ``analysis`` and driving ``noise``.
    """
    if not isinstance(d, dict) or d.get("variant") not in VARIANTS:
        raise ConfigError(f"initial law needs 'variant' in {VARIANTS}")
    v = d["variant"]
    mu0 = float(d.get("mu0", 0.0))
    allowed = {"iid": {"dist"}, "ma": {"coeffs", "innovation"}, "flat": set(),
               "pi0": {"K", "method", "explicit_depth"}}[v] | {"variant", "mu0"}
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown fields for {v} law: {sorted(extra)}")
    if v == "flat":
        return FlatLaw(mu0)
    if v == "iid":
        return IIDLaw(NoiseModel.from_dict(d.get("dist", {"family": "gaussian"})), mu0)
    if v == "ma":
        if "coeffs" not in d:
            raise ConfigError("ma law needs 'coeffs'")
        return MALaw(tuple(d["coeffs"]), NoiseModel.from_dict(d.get("innovation", {"family": "gaussian"})), mu0)
    if analysis is None or noise is None:
        raise ConfigError("pi0 law needs the kernel and noise of the experiment")
    from .invariant import EXPLICIT_DEPTH, StationarySampler

    K = d.get("K", -1)
    sampler = StationarySampler(analysis, noise, K=None if K is None else int(K),
                                method=d.get("method", "series"),
                                explicit_depth=int(d.get("explicit_depth", EXPLICIT_DEPTH)))
    return Pi0Law(sampler, mu0)
