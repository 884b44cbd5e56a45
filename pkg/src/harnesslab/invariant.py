"""Invariant laws of the increment process and diagnostics around them.

In d = 1 the minimal-variance invariant law ``π0`` of the increments is the
law of the stationary series

    η(x) = Σ_{k>=0} Σ_y ξ_{-k}(y) [p^k(x, y) - p^k(x-1, y)],

whose covariance is ``V0(0, x) = σξ² [a(x-1) + a(x+1) - 2a(x)]`` with ``a``
the potential kernel of ``q``.  In Fourier form

    V0(0, x) = (2σξ²/π) ∫_0^π r(θ) cos(xθ) dθ,   r = (1 - cos θ) / (1 - φ_q(θ)).

Since ``φ_q = |φ_p|² >= 0`` every partial sum of the series has a
nonnegative spectral density, which the samplers below exploit.
"""

from dataclasses import dataclass, field
from math import pi, sqrt

import numpy as np
from scipy import integrate

from . import noise as _noise
from .errors import ConfigError, DimensionUnsupported, WindowTooSmall
from .kernel import green_function, iter_powers, potential_kernel_a
from .parallel import map_replicas
from .process import HeightField, IncrementField, evolve_1d, evolve_height, variance_flat_curve

CHOLESKY_MAX = 512
EXPLICIT_DEPTH = 64


def _require_1d(analysis, what):
    if analysis.dimension != 1:
        raise DimensionUnsupported(f"{what} is implemented for d = 1 only")


# --------------------------------------------------------------------------
# spectral helpers


def spectral_r(analysis, theta):
    """``(1 - cos θ) / (1 - φ_q(θ))`` in half-angle form; ``1/σ_q²`` at ``θ = 0``."""
    th = np.asarray(theta, dtype=np.float64)
    z = analysis.q.offsets[:, 0].astype(np.float64)
    den = (np.sin(0.5 * th[..., None] * z) ** 2) @ analysis.q.probs
    num = np.sin(0.5 * th) ** 2
    safe = np.where(den > 0, den, 1.0)
    out = np.where(den > 0, num / safe, 1.0 / analysis.sigma_q_sq)
    return out if out.ndim else float(out)


def phi_q(analysis, theta):
    """Real characteristic function of ``q`` as ``1 - 2 Σ q(z) sin²(zθ/2)``."""
    th = np.asarray(theta, dtype=np.float64)
    z = analysis.q.offsets[:, 0].astype(np.float64)
    out = 1.0 - 2.0 * (np.sin(0.5 * th[..., None] * z) ** 2) @ analysis.q.probs
    return out if out.ndim else float(out)


def block_density(analysis, noise_var, theta, k_lo=0, k_hi=None):
    """Spectral density of ``Σ_{k_lo<=k<=k_hi}`` terms of the π0 series.

    ``2σξ² r(θ) φ^{k_lo} (1 - φ^{k_hi-k_lo+1})``; ``k_hi=None`` means no upper cut.
    """
    ph = np.clip(phi_q(analysis, theta), 0.0, 1.0)
    g = 2.0 * noise_var * spectral_r(analysis, theta) * ph**k_lo
    if k_hi is not None:
        g = g * (1.0 - ph ** (k_hi - k_lo + 1))
    return g


def _peak_points(K):
    # φ^K concentrates on θ ≲ 1/√K; give quad breakpoints there
    if K is None or K < 4:
        return None
    c = 1.0 / sqrt(K)
    return [v for v in (c, 3 * c, 10 * c, 30 * c) if v < pi]


def block_covariance(analysis, noise_var, x, k_lo=0, k_hi=None):
    """``σξ² Σ_{k=k_lo}^{k_hi} [2q^k(x) - q^k(x+1) - q^k(x-1)]`` by quadrature."""
    x = abs(int(x))
    f = lambda th: block_density(analysis, noise_var, th, k_lo, k_hi)
    pts = _peak_points(max(k_lo, 1))
    if x == 0:
        val, _ = integrate.quad(f, 0.0, pi, points=pts, epsabs=1e-13, epsrel=1e-12, limit=400)
    else:
        # QAWO handles the oscillation; split at the peak scale when it is narrow
        edges = [0.0] + (pts or []) + [pi]
        val = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            # full_output silences the roundoff warning QAWO raises when the true value is ~0
            v = integrate.quad(f, a, b, weight="cos", wvar=x, epsabs=1e-13, epsrel=1e-12, limit=400,
                               full_output=1)[0]
            val += v
    return val / pi


# --------------------------------------------------------------------------
# V0


def v0(analysis, noise_var, x, method="fourier"):
    """Stationary increment covariance ``V0(0, x)``.

    ``method='fourier'`` integrates the spectral form; ``'kernel-a'`` takes
    the second difference of the potential kernel.
    """
    _require_1d(analysis, "v0")
    x = int(x)
    if method == "fourier":
        return block_covariance(analysis, noise_var, x)
    if method == "kernel-a":
        a = lambda y: potential_kernel_a(analysis, y)
        return noise_var * (a(x - 1) + a(x + 1) - 2.0 * a(x))
    raise ValueError("method must be 'fourier' or 'kernel-a'")


@dataclass
class CovarianceTableV0:
    """``V0(0, x)`` for ``x = -L .. L`` by one method (with MC stderr if any)."""

    lags: np.ndarray
    values: np.ndarray
    method: str
    stderr: np.ndarray = None


def v0_table(analysis, noise_var, L, method="fourier"):
    half = np.array([v0(analysis, noise_var, x, method) for x in range(L + 1)])
    lags = np.arange(-L, L + 1)
    return CovarianceTableV0(lags, half[np.abs(lags)], method)


# --------------------------------------------------------------------------
# truncated series and its tail


def tail_bound(analysis, noise_var, K):
    """Variance left out by truncating the π0 series after ``k = K``.

    Equals ``2σξ² [a(1) - Σ_{k<=K} (q^k(0) - q^k(1))]``; computed directly as
    ``(2σξ²/π) ∫_0^π r φ^{K+1}`` so it carries no cancellation.
    """
    _require_1d(analysis, "tail_bound")
    if K is None:
        return 0.0
    f = lambda th: spectral_r(analysis, th) * max(phi_q(analysis, th), 0.0) ** (K + 1)
    val, _ = integrate.quad(f, 0.0, pi, points=_peak_points(K + 1), epsabs=1e-15, epsrel=1e-11, limit=400)
    return 2.0 * noise_var * val / pi


def default_depth(analysis, noise_var, eps=1e-3):
    """Smallest ``K`` whose tail bound is at most ``eps · V0(0, 0)``."""
    target = eps * v0(analysis, noise_var, 0)
    hi = 1
    while tail_bound(analysis, noise_var, hi) > target:
        hi *= 2
        if hi > 2**40:
            raise ConfigError("truncation depth search did not converge")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_bound(analysis, noise_var, mid) > target:
            lo = mid
        else:
            hi = mid
    return hi if tail_bound(analysis, noise_var, lo) > target else lo


@dataclass
class StationarySampler:
    """Sampler for (a truncation of) ``π0`` in d = 1.

    Parameters
    ----------
    analysis : KernelAnalysis
    noise : NoiseModel
    K : int or None
        Truncation depth; ``None`` keeps the whole series.  Defaults to
        ``default_depth`` (tail bound at most ``1e-3 V0(0, 0)``).
    method : {'series', 'spectral'}
        ``series`` draws the ``k <= explicit_depth`` terms from the keyed
        noise field (times ``-k``) and the remaining terms ``explicit_depth <
        k <= K`` as one Gaussian block with their exact covariance, so the
        law is exact for Gaussian noise and second-order exact otherwise.
        ``spectral`` draws the whole series as a Gaussian field; it is exact
        for Gaussian noise only.
    explicit_depth : int
    """

    analysis: object
    noise: object
    K: int = -1
    method: str = "series"
    explicit_depth: int = EXPLICIT_DEPTH
    tail: float = field(init=False)
    _factors: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        _require_1d(self.analysis, "StationarySampler")
        if self.method not in ("series", "spectral"):
            raise ConfigError("method must be 'series' or 'spectral'")
        if self.method == "spectral" and self.noise.family != "gaussian":
            raise ConfigError("the spectral π0 sampler is exact only for gaussian noise")
        if self.K == -1:
            self.K = default_depth(self.analysis, self.noise.variance)
        if self.K is not None and self.K < 0:
            raise ConfigError("truncation depth must be nonnegative")
        self.tail = tail_bound(self.analysis, self.noise.variance, self.K)

    @property
    def explicit_steps(self):
        """Number of series terms drawn from the keyed noise field."""
        if self.method == "spectral":
            return 0
        d = self.explicit_depth if self.K is None else min(self.K, self.explicit_depth)
        return d + 1

    @property
    def has_block(self):
        return self.K is None or self.K >= self.explicit_steps

    def variance(self):
        """Exact ``Var η(x)`` of the sampled (truncated) law."""
        return v0(self.analysis, self.noise.variance, 0) - self.tail

    def block_cov(self, x):
        return block_covariance(self.analysis, self.noise.variance, x, self.explicit_steps, self.K)

    def _block_sampler(self, n):
        if n in self._factors:
            return self._factors[n]
        if n <= CHOLESKY_MAX:
            c = np.array([self.block_cov(x) for x in range(n)])
            idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
            C = c[idx]
            w, U = np.linalg.eigh(C)
            # symmetric square root; tiny negative eigenvalues are quadrature noise
            S = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
            entry = ("chol", S)
        else:
            spread = 1024 if self.K is None else int(12 * sqrt(max(self.K, 1) * self.analysis.sigma_q_sq)) + 1024
            M = 1 << int(np.ceil(np.log2(2 * (n + spread))))
            th = 2 * pi * np.arange(M) / M
            g = block_density(self.analysis, self.noise.variance, th, self.explicit_steps, self.K)
            entry = ("fft", np.sqrt(g / M))
        self._factors[n] = entry
        return entry

    def sample(self, lo, hi, seed, replica, backend=None):
        """Increments ``η(x - 1, x)`` for ``x = lo .. hi`` as a flat array."""
        n = hi - lo + 1
        if n <= 0:
            raise WindowTooSmall("empty window")
        eta = np.zeros(n)
        steps = self.explicit_steps
        if steps:
            an = self.analysis
            o = an.spec.offsets[:, 0]
            h_lo = lo - 1 + steps * int(o.min())
            h_hi = hi + steps * int(o.max())
            h = np.zeros(h_hi - h_lo + 1)
            src = _noise.NoiseSource(self.noise, seed, replica, _noise.STREAM_NOISE, backend)
            _, new_lo, m = evolve_1d(h, h_lo, -steps, steps, an, src, backend=backend)
            assert new_lo == lo - 1 and m == n + 1
            eta += np.diff(h[: n + 1])
        if self.has_block:
            kind, S = self._block_sampler(n)
            if kind == "chol":
                z = _noise.standard_normals(seed, replica, n, backend=backend)
                eta += S @ z
            else:
                M = S.shape[0]
                z = _noise.standard_normals(seed, replica, 2 * M, backend=backend)
                eta += np.fft.fft(S * (z[:M] + 1j * z[M:])).real[:n]
        return eta


def sample_pi0(sampler, window, seed, replica, backend=None):
    """Draw one ``π0`` (truncated) sample on the inclusive window ``(lo, hi)``.

    The tail variance bound of the truncation is ``sampler.tail``.
    """
    lo, hi = window
    return IncrementField.from_1d(sampler.sample(lo, hi, seed, replica, backend), lo)


def sample_pi0_batch(sampler, window, seed, replicas, threads=1):
    """Stack of samples, row ``i`` for replica ``replicas[i]``."""
    lo, hi = window
    rows = map_replicas(lambda r: sampler.sample(lo, hi, seed, r), replicas, threads)
    return np.array(rows)


# --------------------------------------------------------------------------
# harmonic functions


@dataclass
class HarmonicFn:
    """Tabulated ``u: Z^d -> R^d`` on a box, with its harmonicity residual.

    ``values`` has shape ``(*box, d)``; in d = 1 a flat array is accepted.
    """

    values: np.ndarray
    lo: tuple
    residual: float = float("nan")

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        self.lo = tuple(int(a) for a in np.atleast_1d(self.lo))
        if v.ndim == len(self.lo):
            v = v[..., None]
        self.values = v

    @property
    def dimension(self):
        return len(self.lo)

    @classmethod
    def constant(cls, c, lo, shape):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        shape = tuple(np.atleast_1d(shape))
        return cls(np.broadcast_to(c, shape + (len(shape),)).copy() if c.size > 1 else np.full(shape, float(c[0])), lo)

    @classmethod
    def linear(cls, A, lo, shape):
        """``u(x) = A x`` (harmonic when the kernel has zero mean)."""
        shape = tuple(np.atleast_1d(shape))
        grids = np.meshgrid(*[np.arange(l, l + s) for l, s in zip(np.atleast_1d(lo), shape)], indexing="ij")
        X = np.stack(grids, axis=-1).astype(float)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(X @ A.T, lo)


def check_harmonic(analysis, u, lo=None):
    """``max_x |Σ_y p(x, y) u(y) - u(x)|`` over the sites whose neighbourhoods
    lie in the table.  Also stores the value on ``u`` if it is a ``HarmonicFn``."""
    if isinstance(u, HarmonicFn):
        vals, lo_ = u.values, u.lo
    else:
        vals = np.asarray(u, dtype=float)
        lo_ = tuple(np.atleast_1d(lo))
        if vals.ndim == len(lo_):
            vals = vals[..., None]
    off = analysis.spec.offsets
    zmin, zmax = off.min(axis=0), off.max(axis=0)
    box = vals.shape[:-1]
    inner = tuple(int(s - (a - b)) for s, a, b in zip(box, zmax, zmin))
    if min(inner) <= 0:
        raise WindowTooSmall("table too small for the kernel support")
    acc = np.zeros(inner + vals.shape[-1:])
    for o, pr in zip(off, analysis.spec.probs):
        sl = tuple(slice(int(a - b), int(a - b) + s) for a, b, s in zip(o, zmin, inner))
        acc = acc + pr * vals[sl]
    centre = tuple(slice(int(-b), int(-b) + s) for b, s in zip(zmin, inner))
    res = float(np.abs(acc - vals[centre]).max())
    if isinstance(u, HarmonicFn):
        u.residual = res
    return res


def add_harmonic(sample, u):
    """Shift increments by ``u``: ``Δ^u(x - e_i, x) = u_i(x) + Δ(x - e_i, x)``."""
    d = sample.dimension
    sl = tuple(slice(a - b, a - b + s) for a, b, s in zip(sample.lo, u.lo, sample.shape))
    if any(a < b for a, b in zip(sample.lo, u.lo)) or any(
            a - b + s > t for a, b, s, t in zip(sample.lo, u.lo, sample.shape, u.values.shape)):
        raise WindowTooSmall("harmonic table does not cover the sample window")
    shift = np.moveaxis(u.values[sl], -1, 0)
    if shift.shape[0] != d:
        raise ValueError("u must take values in R^d")
    return IncrementField(sample.values + shift, sample.lo, sample.t)


# --------------------------------------------------------------------------
# d >= 3 stationary heights


def sample_chi(analysis, noise, K, window, seed, replica):
    """Truncated stationary height series ``χ(x) = Σ_{k<=K} Σ_z ξ_{-k}(z) p^k(x, z)``.

    Returns ``(HeightField, tail_variance_bound)`` where the bound is
    ``σξ²`` times the fitted Green-function tail.
    """
    d = analysis.dimension
    if d < 3:
        raise DimensionUnsupported("no invariant height law exists in d <= 2")
    lo, hi = (tuple(np.atleast_1d(v)) for v in window)
    off = analysis.spec.offsets
    zmin, zmax = off.min(axis=0), off.max(axis=0)
    steps = K + 1
    h_lo = tuple(int(a + steps * z) for a, z in zip(lo, zmin))
    h_hi = tuple(int(a + steps * z) for a, z in zip(hi, zmax))
    h0 = HeightField(np.zeros([b - a + 1 for a, b in zip(h_lo, h_hi)]), h_lo, -steps)
    src = _noise.NoiseSource(noise, seed, replica)
    out = evolve_height(h0, analysis, src, steps, eval_window=(lo, hi))
    tail = noise.variance * green_function(analysis, (0,) * d, K)[1]
    return out, tail


# --------------------------------------------------------------------------
# nonexistence diagnostic


def charfn_theory(analysis, noise_var, alpha, ts):
    """``exp(-½ α² Var h_t(0))`` from a flat start."""
    return np.exp(-0.5 * alpha**2 * variance_flat_curve(analysis, noise_var, ts))


def charfn_diagnostic(analysis, noise, alpha, t_list, replicas, seed=0, width=10000,
                      n_boot=400, threads=1):
    """Empirical ``|E exp(iα h_t(0))|`` from a flat start versus theory.

    Heights are shift invariant in law, so each replica contributes the
    spatial average of ``cos(α h_t(x))`` over ``width`` sites (the imaginary
    part vanishes by symmetry for symmetric noise).  Standard errors come from
    a replica-level bootstrap.

    Returns
    -------
    rows : list of ``(t, estimate, stderr, theory)``
    """
    if analysis.dimension != 1:
        raise DimensionUnsupported("charfn_diagnostic runs the d = 1 simulator")
    ts = sorted(int(t) for t in t_list)
    tmax = ts[-1]
    o = analysis.spec.offsets[:, 0]
    sites = np.arange(width)
    h_lo = tmax * int(o.min())
    n0 = width + tmax * (int(o.max()) - int(o.min()))
    targets = [(t, int(x)) for t in ts for x in sites]

    def run(r):
        src = _noise.NoiseSource(noise, seed, r)
        h = np.zeros(n0)
        vals, _, _ = evolve_1d(h, h_lo, 0, tmax, analysis, src, targets)
        return np.cos(alpha * vals.reshape(len(ts), width)).mean(axis=1)

    per = np.array(map_replicas(run, range(replicas), threads))
    est = per.mean(axis=0)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, _noise.STREAM_BOOTSTRAP)))
    idx = rng.integers(0, replicas, size=(n_boot, replicas))
    boot = per[idx].mean(axis=1)
    se = boot.std(axis=0, ddof=1)
    theory = charfn_theory(analysis, noise.variance, alpha, ts)
    return [(t, float(abs(e)), float(s), float(th)) for t, e, s, th in zip(ts, est, se, theory)]


# --------------------------------------------------------------------------
# convergence to π0


def increment_variance_theory(analysis, noise_var, law, t):
    """Exact ``Var η_t(0)`` for a stationary initial law with lag covariances
    ``law.cov(ℓ)``: ``Σ_ℓ C0(ℓ) q^t(ℓ) + 2σξ² Σ_{k<t} (q^k(0) - q^k(1))``.

    For a ``pi0`` law of depth ``K`` this is ``V0(0, 0) - tail(K + t)``.
    """
    ts = np.atleast_1d(t).astype(int)
    if getattr(law, "variant", None) == "pi0":
        # evolving the depth-K series t steps gives the depth-(K+t) series
        s = law.sampler
        v = v0(analysis, noise_var, 0)
        return np.array([v - (0.0 if s.K is None else tail_bound(analysis, noise_var, s.K + int(k)))
                         for k in ts])
    tmax = int(ts.max())
    noise_part = np.zeros(tmax + 1)
    init_part = np.zeros(tmax + 1)
    lag_max = law.max_lag()
    lags = np.arange(-lag_max, lag_max + 1)
    c0 = np.array([law.cov(l) for l in lags])
    acc = 0.0
    for dist in iter_powers(analysis, "q", tmax, trim_eps=1e-18):
        k = dist.k
        noise_part[k] = acc
        acc += 2.0 * noise_var * (dist.at(0) - dist.at(1))
        init_part[k] = float(c0 @ dist.at(lags))
    return init_part[ts] + noise_part[ts]


def convergence_probe(analysis, noise, law, t_list, replicas, seed=0, threads=1):
    """Monte Carlo trajectory of ``Var η_t(0)`` started from ``law``.

    Returns
    -------
    rows : list of ``(t, estimate, stderr)``; the estimate is the replica
        mean of ``(η_t(0) - μ0)²`` with the known mean ``μ0`` of the law.
    """
    from .initialdata import sample_initial

    _require_1d(analysis, "convergence_probe")
    ts = sorted(int(t) for t in t_list)
    tmax = ts[-1]
    o = analysis.spec.offsets[:, 0]
    lo = -1 + tmax * int(o.min())
    hi = tmax * int(o.max())
    targets = [(t, x) for t in ts for x in (-1, 0)]

    def run(r):
        _, h0 = sample_initial(law, (lo + 1, hi), seed, r)
        h = h0.values.copy()
        src = _noise.NoiseSource(noise, seed, r) if noise is not None else None
        vals, _, _ = evolve_1d(h, h0.lo[0], 0, tmax, analysis, src, targets)
        v = vals.reshape(len(ts), 2)
        return v[:, 1] - v[:, 0]

    eta = np.array(map_replicas(run, range(replicas), threads))
    dev2 = (eta - law.mu0) ** 2
    est = dev2.mean(axis=0)
    se = dev2.std(axis=0, ddof=1) / sqrt(replicas)
    return [(t, float(e), float(s)) for t, e, s in zip(ts, est, se)]
