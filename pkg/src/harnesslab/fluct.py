"""The d = 1 fluctuation experiment.

The scaled height field is

    Y_n(t, r) = n^{-1/4} ( h_{⌊nt⌋}(⌊r√n⌋ + ⌊ntb⌋) - μ0 r√n ),   b = -μ̄,

and splits exactly as ``Y_n = μ0 H̄ + F̄ + S̄`` where, for the walk ``X`` with
steps ``p`` started at ``y = ⌊ntb⌋ + ⌊r√n⌋``,

    H̄ = n^{-1/4} (E X_{⌊nt⌋} - r√n),
    F̄ = n^{-1/4} Σ_{k=1}^{⌊nt⌋} Σ_x ξ_k(x) P(X_{⌊nt⌋-k} = x),
    S̄ = n^{-1/4} Σ_i (η0(i) - μ0) [1{i>0} P(X_{⌊nt⌋} >= i) - 1{i<=0} P(X_{⌊nt⌋} < i)].

Covariances of ``Y_n`` across replicas are compared with the limit
covariance from ``limitcov``.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import floor, sqrt

import numpy as np

from . import noise as _noise
from .errors import ConfigError, DimensionUnsupported, ResourceLimit, WindowTooSmall
from .initialdata import require_moments, rho0, sample_initial
from .kernel import KernelAnalysis, convolve_power
from .limitcov import LimitParams, z_cov_matrix
from .parallel import map_replicas
from .process import DualPlan, HeightField, evolve_1d, loglog_slope, variance_flat_curve

DECOMPOSE_MAX_N = 256
CONE_MAX_N = 1024


def _floor_prod(*xs):
    """``⌊x1 x2 ...⌋`` in exact rational arithmetic on the binary values."""
    v = Fraction(1)
    for x in xs:
        v *= Fraction(x)
    return floor(v)


@dataclass
class FluctConfig:
    """One fluctuation experiment.

    Parameters
    ----------
    analysis : KernelAnalysis
    noise : NoiseModel or None
        ``None`` means ``ξ ≡ 0``.
    law : initial increment law (see ``initialdata``)
    n : int
        Scale parameter, at least 16.
    points : list of (t, r)
    replicas, seed : int
    method : {'auto', 'cone', 'dual'}
        ``cone`` iterates the full light cone; ``dual`` sums over trimmed
        backward-walk tables (mass defect ``trim_eps`` per table).  ``auto``
        picks ``cone`` for ``n <= 1024``.
    box : (T, R)
        Points must satisfy ``t <= T`` and ``|r| <= R``.
    """

    analysis: KernelAnalysis
    noise: object
    law: object
    n: int
    points: list
    replicas: int = 100
    seed: int = 0
    method: str = "auto"
    trim_eps: float = 1e-18
    box: tuple = (4.0, 10.0)
    _plan: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.analysis.dimension != 1:
            raise DimensionUnsupported("the fluctuation experiment is one-dimensional")
        if int(self.n) != self.n or self.n < 16:
            raise ConfigError("n must be an integer >= 16")
        self.n = int(self.n)
        if not self.points:
            raise ConfigError("at least one evaluation point is needed")
        pts = []
        for p in self.points:
            t, r = float(p[0]), float(p[1])
            if not (0.0 <= t <= self.box[0] and abs(r) <= self.box[1]):
                raise ConfigError(f"point {(t, r)} outside the box t <= {self.box[0]}, |r| <= {self.box[1]}")
            pts.append((t, r))
        self.points = pts
        if self.method not in ("auto", "cone", "dual"):
            raise ConfigError("method must be 'auto', 'cone' or 'dual'")
        if self.replicas < 1:
            raise ConfigError("replicas must be positive")
        # fourth moments for covariance estimation
        if self.noise is not None:
            _noise.require_moment(self.noise, 4)
        require_moments(self.law, 4)

    @property
    def b(self):
        return -float(self.analysis.mean[0])

    @property
    def resolved_method(self):
        if self.method == "auto":
            return "cone" if self.n <= CONE_MAX_N else "dual"
        return self.method

    def index(self, point):
        """``(⌊nt⌋, ⌊r√n⌋ + ⌊ntb⌋)`` for one point."""
        t, r = point
        T = _floor_prod(self.n, t)
        y = floor(r * sqrt(self.n)) + _floor_prod(self.n, t, Fraction(-self.analysis.mean[0]))
        return T, y

    def targets(self):
        return [self.index(p) for p in self.points]

    def limit_params(self):
        nv = self.noise.variance if self.noise is not None else 0.0
        return LimitParams(self.analysis.sigma1_sq, nv, rho0(self.law)) if nv > 0 else None

    def to_dict(self):
        return {"kernel": self.analysis.spec.to_dict(),
                "noise": self.noise.to_dict() if self.noise is not None else None,
                "initial": self.law.to_dict(), "n": self.n, "points": [list(p) for p in self.points],
                "replicas": self.replicas, "seed": self.seed, "method": self.method,
                "trim_eps": self.trim_eps, "box": list(self.box)}


def _cone_window(config, targets):
    off = config.analysis.spec.offsets[:, 0]
    zmin, zmax = int(off.min()), int(off.max())
    lo = min(y + T * zmin for T, y in targets)
    hi = max(y + T * zmax for T, y in targets)
    return lo, hi


def _center(config, point, h):
    t, r = point
    lam = config.law.mu0 * r * sqrt(config.n)
    return (h - lam) / config.n**0.25


def _noise_source(config, replica):
    if config.noise is None:
        return None
    return _noise.NoiseSource(config.noise, config.seed, replica, _noise.STREAM_NOISE)


def plan(config):
    """Shared trimmed backward-walk plan for the ``dual`` method (cached)."""
    if config._plan is None:
        config._plan = DualPlan(config.analysis, config.targets(), config.trim_eps)
    return config._plan


def heights(config, replica):
    """Raw ``h_{⌊nt⌋}(y)`` at all points, from one coupled trajectory."""
    targets = config.targets()
    src = _noise_source(config, replica)
    if config.resolved_method == "dual":
        pl = plan(config)
        _, h0 = sample_initial(config.law, (pl.init_lo + 1, pl.init_hi), config.seed, replica)
        return pl.evaluate(h0, src)
    lo, hi = _cone_window(config, targets)
    _, h0 = sample_initial(config.law, (lo + 1, hi), config.seed, replica)
    tmax = max(T for T, _ in targets)
    vals, _, _ = evolve_1d(h0.values.copy(), h0.lo[0], 0, tmax, config.analysis, src, targets)
    return vals


def eval_field(config, replica):
    """``Y_n`` at every evaluation point for one replica."""
    h = heights(config, replica)
    return np.array([_center(config, p, v) for p, v in zip(config.points, h)])


# --------------------------------------------------------------------------
# decomposition


@dataclass
class Decomposition:
    y: float
    h_bar: float
    f_bar: float
    s_bar: float
    mu0: float

    @property
    def total(self):
        return self.mu0 * self.h_bar + self.f_bar + self.s_bar

    @property
    def residual(self):
        return abs(self.total - self.y)


def decompose(config, replica, point):
    """Split ``Y_n(t, r)`` for one replica into ``μ0 H̄ + F̄ + S̄`` with exact tables.

    ``Y_n`` is evaluated by the light cone from the same initial sample, so
    the identity can be checked to rounding.
    """
    n = config.n
    if n > DECOMPOSE_MAX_N:
        raise ResourceLimit(f"exact decomposition is limited to n <= {DECOMPOSE_MAX_N}")
    an = config.analysis
    T, y = config.index(point)
    scale = n ** -0.25
    lo, hi = _cone_window(config, [(T, y)])
    # S̄ also weighs the sites between the cone and the origin, so draw over the hull
    lo, hi = min(lo, 0), max(hi, 0)
    eta0, h0 = sample_initial(config.law, (lo + 1, hi), config.seed, replica)
    src = _noise_source(config, replica)
    vals, _, _ = evolve_1d(h0.values.copy(), h0.lo[0], 0, T, an, src, [(T, y)])
    Y = _center(config, point, vals[0])

    t, r = point
    mu_bar = float(an.mean[0])
    h_bar = scale * (y + mu_bar * T - r * sqrt(n))

    f_bar = 0.0
    if src is not None:
        for k in range(1, T + 1):
            pk = convolve_power(an, "p", T - k)
            row = src.row(k, y + pk.lo[0], len(pk.values))
            f_bar += float(pk.values @ row)
        f_bar *= scale

    # S̄: X_T = y + W with W ~ p^T
    pT = convolve_power(an, "p", T)
    start, w = _initial_weights(T, y, (pT.lo[0], pT.values))
    i0 = start - eta0.lo[0]
    s_bar = scale * float(w @ (eta0.eta[i0: i0 + len(w)] - config.law.mu0))
    return Decomposition(Y, h_bar, f_bar, s_bar, config.law.mu0)


def h_bar_bound(config):
    """Floor-error bound ``(1 + |b|) (2 + μ̄-rounding) n^{-1/4}`` for ``|H̄|``.

    ``E X - r√n = ⌊r√n⌋ - r√n + ⌊ntb⌋ + μ̄⌊nt⌋`` and each floor costs less than
    one unit (times ``|b|`` for the drift term).
    """
    b = abs(config.b)
    return (1.0 + b) * 2.0 * config.n ** -0.25


# --------------------------------------------------------------------------
# covariance estimation


@dataclass
class CovEstimate:
    """Sample covariance of ``Y_n`` over replicas with jackknife standard errors."""

    points: list
    mean: np.ndarray
    cov: np.ndarray
    stderr: np.ndarray
    replicas: int
    samples: np.ndarray = field(default=None, repr=False)


def jackknife_cov(X):
    """Sample covariance (``ddof=1``) and delete-one jackknife standard errors.

    Uses ``S_{-i} = S - R/(R-1) (x_i - m)(x_i - m)^T`` for the centered
    cross-product ``S``, so the cost is ``O(R J²)``.
    """
    X = np.asarray(X, dtype=np.float64)
    R = X.shape[0]
    if R < 3:
        raise ConfigError("at least three replicas are needed for jackknife errors")
    m = X.mean(axis=0)
    D = X - m
    S = D.T @ D
    cov = S / (R - 1)
    outer = D[:, :, None] * D[:, None, :]
    loo = (S[None] - (R / (R - 1)) * outer) / (R - 2)
    mbar = loo.mean(axis=0)
    se = np.sqrt((R - 1) / R * ((loo - mbar) ** 2).sum(axis=0))
    return cov, se


def sample_field(config, threads=1, replicas=None):
    """``R x J`` array of ``Y_n`` samples in replica order."""
    reps = range(config.replicas) if replicas is None else replicas
    if config.resolved_method == "dual":
        plan(config)  # build once before the workers start
    return np.array(map_replicas(lambda r: eval_field(config, r), reps, threads))


def _initial_weights(T, y, table):
    """Weights ``w_i`` of ``S̄`` on the sites ``i`` where they can be nonzero."""
    lo_m, vals = table
    lo = y + lo_m
    hi = lo + len(vals) - 1
    # sites between the support of X_T and the origin carry weight ±1
    start = min(lo, 0) + 1
    i = np.arange(start, max(hi, 0) + 1)
    cdf = np.cumsum(vals)
    j = i - 1 - lo
    below = np.where(j < 0, 0.0, cdf[np.clip(j, 0, len(cdf) - 1)])  # P(X_T <= i - 1)
    return start, np.where(i > 0, 1.0 - below, -below)


def exact_cov(config):
    """Exact finite-``n`` covariance of ``Y_n`` over the evaluation points.

    ``Cov = n^{-1/2} [σξ² Σ_k Σ_x p^{T_a-k}(x-y_a) p^{T_b-k}(x-y_b) + Σ_{i,j} w^a_i w^b_j C0(i-j)]``
    with the initial covariances ``C0`` of the law (lags up to ``law.max_lag()``).
    Uses the trimmed tables of ``plan(config)``, so the error is of order
    ``trim_eps``.  The truncation of a ``pi0`` law is taken as sampled.
    """
    pl = plan(config)
    tg = config.targets()
    J = len(tg)
    nv = config.noise.variance if config.noise is not None else 0.0
    L = config.law.max_lag()
    c0 = np.array([config.law.cov(l) for l in range(-L, L + 1)])
    weights = [_initial_weights(T, y, pl.tables[T]) for T, y in tg]
    out = np.zeros((J, J))
    for a in range(J):
        for b in range(a, J):
            (Ta, ya), (Tb, yb) = tg[a], tg[b]
            acc = 0.0
            if nv > 0:
                for k in range(1, min(Ta, Tb) + 1):
                    la, va = pl.tables[Ta - k]
                    lb, vb = pl.tables[Tb - k]
                    s, e = max(ya + la, yb + lb), min(ya + la + len(va), yb + lb + len(vb))
                    if s < e:
                        acc += float(va[s - ya - la: e - ya - la] @ vb[s - yb - lb: e - yb - lb])
                acc *= nv
            if c0.any():
                (sa, wa), (sb, wb) = weights[a], weights[b]
                # Σ_j C0(i - j) w^b_j on the sites sb - L .. sb + len(wb) - 1 + L
                cw = np.convolve(wb, c0)
                s = max(sa, sb - L)
                e = min(sa + len(wa), sb + len(wb) + L)
                if s < e:
                    acc += float(wa[s - sa: e - sa] @ cw[s - (sb - L): e - (sb - L)])
            out[a, b] = out[b, a] = acc / sqrt(config.n)
    return out


def estimate_cov(config, threads=1):
    X = sample_field(config, threads)
    cov, se = jackknife_cov(X)
    return CovEstimate(list(config.points), X.mean(axis=0), cov, se, X.shape[0], X)


@dataclass
class CompareReport:
    theory: np.ndarray
    z: np.ndarray
    flagged: list
    threshold: float = 3.0

    @property
    def passed(self):
        return not self.flagged

    @property
    def max_abs_z(self):
        return float(np.nanmax(np.abs(self.z)))

    def rows(self, est):
        J = len(est.points)
        for i in range(J):
            for j in range(i, J):
                yield (i, j, est.cov[i, j], est.stderr[i, j], self.theory[i, j], self.z[i, j])


COV_HEADER = ["i", "j", "est", "stderr", "theory", "z"]


def compare(est, params, threshold=3.0):
    """z-scores ``(est - z_cov) / stderr`` per entry; flags ``|z| > threshold``."""
    theory = z_cov_matrix(params, est.points)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(est.stderr > 0, (est.cov - theory) / est.stderr,
                     np.where(est.cov == theory, 0.0, np.inf))
    J = len(est.points)
    flagged = [(i, j) for i in range(J) for j in range(i, J) if abs(z[i, j]) > threshold]
    return CompareReport(theory, z, flagged, threshold)


# --------------------------------------------------------------------------
# hydrodynamic limit and variance scaling


def hydro_check(analysis, noise, u0, n_list, t=1.0, R_box=3.0, seed=0, npts=64):
    """Sup-error of ``n^{-1} h_{⌊nt⌋}(⌊nx⌋)`` against ``u0(x + tμ̄)``.

    Initial heights are ``h0(x) = ⌊n u0(x/n)⌋``; the error is taken over
    ``npts`` equally spaced ``x`` in ``[-R_box, R_box]``.

    Returns
    -------
    rows : list of ``(n, sup_error)``
    """
    if analysis.dimension != 1:
        raise DimensionUnsupported("hydro_check is one-dimensional")
    off = analysis.spec.offsets[:, 0]
    mu = float(analysis.mean[0])
    xs = np.linspace(-R_box, R_box, npts)
    rows = []
    for n in n_list:
        n = int(n)
        T = _floor_prod(n, t)
        sites = np.floor(n * xs).astype(np.int64)
        lo = int(sites.min()) + T * int(off.min())
        hi = int(sites.max()) + T * int(off.max())
        grid = np.arange(lo, hi + 1)
        h0 = np.floor(n * np.asarray(u0(grid / n), dtype=float))
        src = _noise.NoiseSource(noise, seed, 0) if noise is not None else None
        vals, _, _ = evolve_1d(h0, lo, 0, T, analysis, src, [(T, int(s)) for s in sites])
        err = np.abs(vals / n - np.asarray(u0(xs + t * mu), dtype=float))
        rows.append((n, float(err.max())))
    return rows


def variance_scaling(analysis, noise, t_list, replicas=1000, seed=0, threads=1, trim_eps=1e-18):
    """Monte Carlo ``Var h_t`` from a flat start against the exact curve.

    Each ``h_t`` is read at the drift-following site ``⌊-μ̄t⌋`` (the law does
    not depend on the site), all times on one trajectory per replica.

    Returns
    -------
    dict with ``rows`` ``(t, mc, stderr, exact)``, ``slope_exact`` and ``slope_mc``.
    """
    if analysis.dimension != 1:
        raise DimensionUnsupported("variance_scaling runs the d = 1 simulator")
    ts = sorted(int(t) for t in t_list)
    mu = Fraction(float(analysis.mean[0]))
    targets = [(t, floor(-mu * t)) for t in ts]
    pl = DualPlan(analysis, targets, trim_eps)
    zero = HeightField(np.zeros(pl.init_hi - pl.init_lo + 1), (pl.init_lo,), 0)

    def run(r):
        return pl.evaluate(zero, _noise.NoiseSource(noise, seed, r))

    H = np.array(map_replicas(run, range(replicas), threads))
    sq = H**2  # the mean is exactly zero from a flat start
    mc = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / sqrt(replicas)
    exact = variance_flat_curve(analysis, noise.variance, ts)
    return {"rows": [(t, float(a), float(b), float(c)) for t, a, b, c in zip(ts, mc, se, exact)],
            "slope_exact": loglog_slope(ts, exact), "slope_mc": loglog_slope(ts, mc)}
