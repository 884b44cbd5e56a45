"""Covariance of the Gaussian limit field and its building blocks.

The limit of the rescaled height fluctuations is a centered Gaussian field
``Z(t, r)`` with covariance ``(σξ²/σ1²) Γ1 + ρ0 Γ2``.  Both kernels are
written through

    Ψ_{ν²}(x) = ν² φ_{ν²}(x) - x (1 - Φ_{ν²}(x)),

where ``φ_{ν²}``, ``Φ_{ν²}`` are the N(0, ν²) density and cdf.  Each kernel is
available in closed form and as an independent quadrature.
"""

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import ConfigError

TRUNC_SD = 8.0


@dataclass(frozen=True)
class LimitParams:
    """Coefficients of the limit covariance: ``σ1²``, ``σξ²`` and ``ρ0``."""

    sigma1_sq: float
    noise_var: float
    rho0: float

    def __post_init__(self):
        for name in ("sigma1_sq", "noise_var"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be finite and positive")
        if not (np.isfinite(self.rho0) and self.rho0 >= 0):
            raise ConfigError("rho0 must be finite and nonnegative")

    @classmethod
    def stationary(cls, sigma1_sq, noise_var):
        """``ρ0 = σξ²/σ1²``, the value for stationary initial increments."""
        return cls(sigma1_sq, noise_var, noise_var / sigma1_sq)


def gauss_pdf(nu2, x):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):  # subnormal nu2: the exponent overflows to -inf, giving 0
        return np.exp(-0.5 * x * x / nu2) / np.sqrt(2 * pi * nu2)


def gauss_sf(nu2, x):
    """``1 - Φ_{ν²}(x)`` without cancellation."""
    return ndtr(-np.asarray(x, dtype=float) / np.sqrt(nu2))


def psi(nu2, x):
    """``Ψ_{ν²}(x)``; at ``ν² = 0`` the continuous limit ``max(-x, 0)``."""
    x = np.asarray(x, dtype=float)
    if nu2 < 0:
        raise ValueError("nu2 must be nonnegative")
    if nu2 == 0:
        out = np.maximum(-x, 0.0)
    else:
        out = nu2 * gauss_pdf(nu2, x) - x * gauss_sf(nu2, x)
    return out if out.ndim else float(out)


def _pt(p):
    t, r = float(p[0]), float(p[1])
    if t < 0:
        raise ValueError("time coordinate must be nonnegative")
    return t, r


def gamma1(p1, p2, sigma1_sq, route="closed"):
    """``Γ1((t, r), (s, q)) = Ψ_{σ1²(t+s)}(r-q) - Ψ_{σ1²|t-s|}(r-q)``.

    ``route='integral'`` evaluates ``½ ∫_{σ1²|t-s|}^{σ1²(t+s)} (2πv)^{-1/2}
    e^{-(r-q)²/2v} dv`` instead (after ``v = w²``, which removes the
    endpoint singularity).
    """
    (t, r), (s, q) = _pt(p1), _pt(p2)
    dx = r - q
    if route == "closed":
        return psi(sigma1_sq * (t + s), dx) - psi(sigma1_sq * abs(t - s), dx)
    if route != "integral":
        raise ValueError("route must be 'closed' or 'integral'")
    w0 = sqrt(sigma1_sq * abs(t - s))
    w1 = sqrt(sigma1_sq * (t + s))
    if w1 == w0:
        return 0.0
    f = lambda w: np.exp(-0.5 * dx * dx / (w * w)) if w > 0 else 0.0
    val, _ = integrate.quad(f, w0, w1, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val / sqrt(2 * pi)


def gamma2(p1, p2, sigma1_sq, route="closed"):
    """``Γ2((t, r), (s, q)) = Ψ_{σ1²s}(-q) + Ψ_{σ1²t}(r) - Ψ_{σ1²(t+s)}(r-q)``.

    ``route='integral'`` evaluates

        ∫_{-∞}^0 P(B_{σ1²s} > q-x) P(B_{σ1²t} > r-x) dx
        + ∫_0^∞ P(B_{σ1²s} <= q-x) P(B_{σ1²t} <= r-x) dx

    truncated at ``±(|q| + |r| + 8 σ1 √(t+s))``.
    """
    (t, r), (s, q) = _pt(p1), _pt(p2)
    if route == "closed":
        return psi(sigma1_sq * s, -q) + psi(sigma1_sq * t, r) - psi(sigma1_sq * (t + s), r - q)
    if route != "integral":
        raise ValueError("route must be 'closed' or 'integral'")

    def sf(nu2, y):
        # P(B_{ν²} > y), a step function at ν² = 0
        return gauss_sf(nu2, y) if nu2 > 0 else float(y < 0)

    vs, vt = sigma1_sq * s, sigma1_sq * t
    L = abs(q) + abs(r) + TRUNC_SD * sqrt(sigma1_sq * (t + s)) + 1.0
    left = lambda x: sf(vs, q - x) * sf(vt, r - x)
    right = lambda x: (1.0 - sf(vs, q - x)) * (1.0 - sf(vt, r - x))
    # break at the centres and at a few standard deviations around them, so
    # narrow transitions (small variances) are not stepped over
    brk = {q, r}
    for c, nu2 in ((q, vs), (r, vt)):
        for k in (0.5, 2.0, 8.0):
            brk |= {c - k * sqrt(nu2), c + k * sqrt(nu2)}
    a = _quad_split(left, -L, 0.0, brk)
    b = _quad_split(right, 0.0, L, brk)
    return a + b


def _quad_split(f, lo, hi, breaks):
    edges = [lo] + sorted(b for b in breaks if lo < b < hi) + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += v
    return total


def z_cov(params, p1, p2, route="closed"):
    """Limit covariance ``(σξ²/σ1²) Γ1 + ρ0 Γ2`` between two space-time points."""
    g1 = gamma1(p1, p2, params.sigma1_sq, route)
    g2 = gamma2(p1, p2, params.sigma1_sq, route)
    return params.noise_var / params.sigma1_sq * g1 + params.rho0 * g2


def z_cov_matrix(params, points, route="closed"):
    """Gram matrix of ``z_cov`` over a list of ``(t, r)`` points."""
    n = len(points)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = z_cov(params, points[i], points[j], route)
    return out


def fbm_cov(params, s, t):
    """``σξ² / √(2πσ1²) (√s + √t - √|t-s|)``, the stationary-start case.

    Requires ``ρ0 = σξ²/σ1²``.
    """
    if not np.isclose(params.rho0, params.noise_var / params.sigma1_sq, rtol=1e-12, atol=0.0):
        raise ConfigError("fbm_cov needs rho0 = noise_var / sigma1_sq")
    c = params.noise_var / sqrt(2 * pi * params.sigma1_sq)
    return c * (sqrt(s) + sqrt(t) - sqrt(abs(t - s)))


def table_rows(params, pairs):
    """Rows ``s,q,t,r,gamma1,gamma2,zcov`` for point pairs ``((s, q), (t, r))``."""
    for (s, q), (t, r) in pairs:
        yield (s, q, t, r, gamma1((t, r), (s, q), params.sigma1_sq),
               gamma2((t, r), (s, q), params.sigma1_sq), z_cov(params, (t, r), (s, q)))


TABLE_HEADER = ["s", "q", "t", "r", "gamma1", "gamma2", "zcov"]
