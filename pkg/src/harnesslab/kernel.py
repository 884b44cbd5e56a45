"""Finite-support random-walk kernels and their exact analysis.

A kernel ``p`` is a probability law on a finite subset of ``Z^d``.  Besides
validation (probability, range, strong aperiodicity) this module computes
the derived objects every other layer relies on: the symmetrization
``q = p ⋆ p̃``, exact convolution powers, characteristic functions, the
potential kernel of ``q`` (d = 1), Green-function partial sums (d >= 3) and
local-CLT sums.
"""

import threading
from dataclasses import dataclass, field
from math import gcd, log, pi, sqrt

import numpy as np
from scipy import integrate, special

from .errors import DimensionUnsupported, RejectedKernel, ResourceLimit

DEFAULT_CELL_CAP = 10**8
MAX_RANGE = 4096


# --------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class KernelSpec:
    """Support and probabilities of a jump law ``p(0, x)``.

    Parameters
    ----------
    offsets : array_like of int, shape (m, d)
        Distinct support points.  A 1-D list is read as ``d = 1``.
    probs : array_like of float, shape (m,)
    range_bound : int, optional
        Declared range ``M``; offsets with ``|x|_∞ > M`` are rejected.
    """

    offsets: np.ndarray
    probs: np.ndarray
    range_bound: int = None

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=np.int64)
        if off.ndim == 1:
            off = off[:, None]
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64).ravel())

    @property
    def dimension(self):
        return self.offsets.shape[1]

    @property
    def range(self):
        return int(np.abs(self.offsets).max()) if self.offsets.size else 0

    @classmethod
    def from_table(cls, table, range_bound=None):
        """Build from ``{offset: prob}``; offsets are ints (d = 1) or tuples."""
        items = sorted(table.items(), key=lambda kv: np.atleast_1d(kv[0]).tolist())
        off = [np.atleast_1d(k).tolist() for k, _ in items]
        return cls(np.array(off, dtype=np.int64), [v for _, v in items], range_bound)

    @classmethod
    def from_dict(cls, d):
        """Read ``{"d": int, "support": [{"offset": [...], "prob": float}, ...]}``."""
        try:
            dim = int(d["d"])
            sup = d["support"]
            off = np.array([list(np.atleast_1d(s["offset"])) for s in sup], dtype=np.int64)
            probs = [float(s["prob"]) for s in sup]
        except (KeyError, TypeError, ValueError) as exc:
            raise RejectedKernel("not-probability", f"malformed kernel spec: {exc}") from None
        if off.size == 0:
            off = np.zeros((0, dim), dtype=np.int64)
        if off.shape[1] != dim:
            raise RejectedKernel("not-probability", "offset length does not match 'd'")
        return cls(off, probs, d.get("range"))

    def to_dict(self):
        out = {
            "d": self.dimension,
            "support": [{"offset": o.tolist(), "prob": float(p)} for o, p in zip(self.offsets, self.probs)],
        }
        if self.range_bound is not None:
            out["range"] = int(self.range_bound)
        return out


def lazy_kernel():
    """``p(0) = p(1) = 1/2``: the standard test kernel."""
    return KernelSpec.from_table({0: 0.5, 1: 0.5})


# --------------------------------------------------------------------------
# lattice distributions


@dataclass
class LatticeDistribution:
    """Dense table of a law on a box of ``Z^d``.

    ``values[i]`` is the mass at site ``lo + i`` (multi-index for d > 1).
    """

    values: np.ndarray
    lo: tuple
    k: int = 0

    @property
    def dimension(self):
        return len(self.lo)

    @property
    def hi(self):
        return tuple(l + s - 1 for l, s in zip(self.lo, self.values.shape))

    def sites(self):
        """Coordinates along each axis."""
        return [np.arange(l, l + s) for l, s in zip(self.lo, self.values.shape)]

    def at(self, x):
        """Mass at ``x`` (array of sites allowed in d = 1); zero outside the box."""
        if self.dimension == 1:
            x = np.asarray(x, dtype=np.int64)
            i = x - self.lo[0]
            ok = (i >= 0) & (i < self.values.shape[0])
            out = np.where(ok, self.values[np.clip(i, 0, self.values.shape[0] - 1)], 0.0)
            return out if out.ndim else float(out)
        idx = tuple(int(a) - l for a, l in zip(x, self.lo))
        if any(i < 0 or i >= s for i, s in zip(idx, self.values.shape)):
            return 0.0
        return float(self.values[idx])

    def total(self):
        return float(self.values.sum())

    def rows(self):
        """``(x, value)`` pairs for CSV output (d = 1)."""
        return zip(self.sites()[0].tolist(), self.values.tolist())


def _convolve_step(dist, offsets, probs):
    """One exact convolution of ``dist`` with the kernel ``(offsets, probs)``.

    Terms are added in support order, so results are bit-reproducible.
    """
    off = np.asarray(offsets)
    zmin = off.min(axis=0)
    zmax = off.max(axis=0)
    shape = tuple(s + int(a - b) for s, a, b in zip(dist.values.shape, zmax, zmin))
    new = np.zeros(shape)
    for o, pr in zip(off, probs):
        sl = tuple(slice(int(a - b), int(a - b) + s) for a, b, s in zip(o, zmin, dist.values.shape))
        new[sl] += pr * dist.values
    lo = tuple(int(l + z) for l, z in zip(dist.lo, zmin))
    return LatticeDistribution(new, lo, dist.k + 1)


def _point_mass(d):
    return LatticeDistribution(np.ones((1,) * d), (0,) * d, 0)


def _symmetrize(dist):
    # q^k tables are symmetric about 0; enforce it bit-exactly
    flipped = dist.values[(slice(None, None, -1),) * dist.dimension]
    return LatticeDistribution(0.5 * (dist.values + flipped), dist.lo, dist.k)


# --------------------------------------------------------------------------
# validation


def hermite_normal_form(rows):
    """Row-style Hermite normal form of an integer matrix.

    Returns the nonzero rows of ``H``: upper echelon, positive pivots and
    entries above each pivot reduced into ``[0, pivot)``.  ``H`` spans the
    same lattice as the input rows.
    """
    A = [[int(v) for v in r] for r in rows]
    m = len(A)
    n = len(A[0]) if m else 0
    r = 0
    for c in range(n):
        if r == m:
            break
        while True:
            nz = [i for i in range(r, m) if A[i][c] != 0]
            if not nz:
                break
            i0 = min(nz, key=lambda i: abs(A[i][c]))
            A[r], A[i0] = A[i0], A[r]
            clean = True
            for i in range(r + 1, m):
                if A[i][c]:
                    f = A[i][c] // A[r][c]
                    A[i] = [a - f * b for a, b in zip(A[i], A[r])]
                    clean = clean and A[i][c] == 0
            if clean:
                break
        if A[r][c] == 0:
            continue
        if A[r][c] < 0:
            A[r] = [-a for a in A[r]]
        for i in range(r):
            f = A[i][c] // A[r][c]
            if f:
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        r += 1
    return A[:r]


def lattice_index(vectors, d):
    """Index ``[Z^d : L]`` of the lattice spanned by ``vectors`` (0 if not full rank)."""
    H = hermite_normal_form(vectors) if len(vectors) else []
    if len(H) < d:
        return 0
    det = 1
    for i, row in enumerate(H[:d]):
        det *= row[i]
    return abs(det)


def strongly_aperiodic(offsets):
    """True when the differences of the support generate all of ``Z^d``."""
    off = np.asarray(offsets, dtype=np.int64)
    d = off.shape[1]
    diffs = (off[1:] - off[0]).tolist()
    if d == 1:
        g = 0
        for (v,) in diffs:
            g = gcd(g, v)
        return g == 1
    return lattice_index(diffs, d) == 1


def validate_kernel(spec, cell_cap=DEFAULT_CELL_CAP):
    """Check the admissibility conditions and return a ``KernelAnalysis``.

    Raises
    ------
    RejectedKernel
        with reason ``not-probability``, ``range-exceeded``, ``degenerate``,
        ``not-strongly-aperiodic`` or ``zero-variance``.
    """
    off, pr = spec.offsets, spec.probs
    if pr.size == 0 or off.shape[0] != pr.size:
        raise RejectedKernel("degenerate", "empty support or mismatched offsets/probabilities")
    if not np.all(np.isfinite(pr)) or np.any(pr <= 0) or np.any(pr > 1):
        raise RejectedKernel("not-probability", "probabilities must lie in (0, 1]")
    if abs(pr.sum() - 1.0) > 1e-12:
        raise RejectedKernel("not-probability", f"probabilities sum to {pr.sum()!r}, not 1")
    if len({tuple(o) for o in off.tolist()}) != len(off):
        raise RejectedKernel("not-probability", "support offsets must be distinct")
    bound = MAX_RANGE if spec.range_bound is None else min(int(spec.range_bound), MAX_RANGE)
    if spec.range > bound:
        raise RejectedKernel("range-exceeded", f"support radius {spec.range} exceeds {bound}")
    if len(off) == 1:
        raise RejectedKernel("degenerate", "point-mass kernel")
    if not strongly_aperiodic(off):
        raise RejectedKernel("not-strongly-aperiodic",
                             "support differences do not generate the full lattice")
    return KernelAnalysis(spec, cell_cap)


# --------------------------------------------------------------------------
# analysis


@dataclass
class KernelAnalysis:
    """Derived quantities of a validated kernel.

    Attributes
    ----------
    mean : ndarray, shape (d,)
        ``μ̄ = Σ x p(x)``.
    drift : float
        ``b = -μ̄`` (d = 1).
    sigma1_sq : float
        Variance of one ``p`` step (d = 1).
    q : KernelSpec
        Symmetrized kernel ``q(x) = Σ_z p(z) p(x + z)``.
    """

    spec: KernelSpec
    cell_cap: int = DEFAULT_CELL_CAP
    mean: np.ndarray = field(init=False)
    cov: np.ndarray = field(init=False)
    q: KernelSpec = field(init=False)
    _cache: dict = field(init=False, repr=False)
    _memo: dict = field(init=False, repr=False)
    _lock: object = field(init=False, repr=False)

    def __post_init__(self):
        off = self.spec.offsets.astype(np.float64)
        pr = self.spec.probs
        self.mean = pr @ off
        c = off - self.mean
        self.cov = (c * pr[:, None]).T @ c
        if self.dimension == 1 and not self.cov[0, 0] > 0:
            raise RejectedKernel("zero-variance", "one-dimensional kernel with zero variance")
        self.q = _symmetrized_spec(self.spec)
        self._cache = {}
        self._memo = {}
        self._lock = threading.Lock()

    @property
    def dimension(self):
        return self.spec.dimension

    @property
    def range(self):
        return self.spec.range

    @property
    def drift(self):
        return -float(self.mean[0])

    @property
    def sigma1_sq(self):
        return float(self.cov[0, 0])

    @property
    def sigma_q_sq(self):
        """Variance of one ``q`` step, ``2 σ1²`` in d = 1."""
        return float(self.q.probs @ (self.q.offsets[:, 0].astype(float) ** 2))

    @property
    def span(self):
        """``zmax - zmin`` of the support (d = 1)."""
        o = self.spec.offsets[:, 0]
        return int(o.max() - o.min())

    def kernel(self, which):
        if which == "p":
            return self.spec
        if which == "q":
            return self.q
        raise ValueError("kernel must be 'p' or 'q'")

    def cached_cells(self):
        return sum(v.values.size for v in self._cache.values())

    def power(self, which, k):
        return convolve_power(self, which, k)


def _symmetrized_spec(spec):
    off, pr = spec.offsets, spec.probs
    acc = {}
    for i in range(len(pr)):
        for j in range(len(pr)):
            x = tuple((off[j] - off[i]).tolist())
            acc[x] = acc.get(x, 0.0) + pr[i] * pr[j]
    keys = sorted(acc)
    vals = {x: 0.5 * (acc[x] + acc[tuple(-v for v in x)]) for x in keys}
    return KernelSpec(np.array(keys, dtype=np.int64), [vals[x] for x in keys])


def convolve_power(analysis, which, k):
    """Exact ``k``-fold convolution power of ``p`` or ``q`` (cached).

    Raises ``ResourceLimit`` when the cache would exceed ``analysis.cell_cap``
    cells.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    key = (which, int(k))
    cache = analysis._cache
    if key in cache:
        return cache[key]
    spec = analysis.kernel(which)
    with analysis._lock:
        start = max((j for (w, j) in cache if w == which and j <= k), default=None)
        dist = cache[(which, start)] if start is not None else _point_mass(analysis.dimension)
        if start is None:
            cache[(which, 0)] = dist
        width = np.ptp(spec.offsets, axis=0)
        need = sum(int(np.prod(np.array(dist.values.shape) + (j - dist.k) * width))
                   for j in range(dist.k + 1, k + 1))
        if analysis.cached_cells() + need > analysis.cell_cap:
            raise ResourceLimit(f"power table {which}^{k} needs {need} more cells; cap is {analysis.cell_cap}")
        while dist.k < k:
            dist = _convolve_step(dist, spec.offsets, spec.probs)
            if which == "q":
                dist = _symmetrize(dist)
            cache[(which, dist.k)] = dist
    return dist


def iter_powers(analysis, which, kmax, trim_eps=0.0):
    """Yield ``p^k`` (or ``q^k``) for ``k = 0 .. kmax`` without caching.

    With ``trim_eps > 0`` each table is cut to a Hoeffding window around the
    mean outside of which the true mass is below ``trim_eps``; the dropped
    mass is bounded by ``kmax * trim_eps``.  d = 1 only.
    """
    spec = analysis.kernel(which)
    off = spec.offsets[:, 0]
    width = int(off.max() - off.min())
    mu = float(spec.probs @ off)
    dist = _point_mass(1)
    yield dist
    for k in range(1, kmax + 1):
        dist = _convolve_step(dist, spec.offsets, spec.probs)
        if which == "q":
            dist = _symmetrize(dist)
        if trim_eps > 0:
            rad = width * sqrt(k * log(2.0 / trim_eps) / 2.0)
            a = int(np.floor(k * mu - rad)) - 1
            b = int(np.ceil(k * mu + rad)) + 1
            if which == "q":
                a, b = min(a, -b), max(b, -a)
            i0 = max(a - dist.lo[0], 0)
            i1 = min(b - dist.lo[0] + 1, dist.values.shape[0])
            if i0 > 0 or i1 < dist.values.shape[0]:
                dist = LatticeDistribution(dist.values[i0:i1].copy(), (dist.lo[0] + i0,), k)
        yield dist


def char_fn(analysis, which, theta):
    """``φ(θ) = Σ_x p(0, x) e^{iθ·x}``.

    ``theta`` is a scalar or array in d = 1, otherwise an array whose last
    axis has length d.
    """
    spec = analysis.kernel(which)
    th = np.asarray(theta, dtype=np.float64)
    if analysis.dimension == 1:
        phase = th[..., None] * spec.offsets[:, 0]
    else:
        phase = th @ spec.offsets.T.astype(np.float64)
    out = np.exp(1j * phase) @ spec.probs
    return out if np.ndim(out) else complex(out)


def one_minus_phi_q(analysis, theta):
    """``1 - φ_q(θ)`` in the cancellation-free form ``2 Σ q(z) sin²(zθ/2)`` (d = 1)."""
    th = np.asarray(theta, dtype=np.float64)
    z = analysis.q.offsets[:, 0]
    return 2.0 * (np.sin(0.5 * th[..., None] * z) ** 2) @ analysis.q.probs


def _require_1d(analysis, what):
    if analysis.dimension != 1:
        raise DimensionUnsupported(f"{what} is implemented for d = 1 only")


# --------------------------------------------------------------------------
# potential kernel


def _a_integrand(analysis, x):
    z = analysis.q.offsets[:, 0].astype(np.float64)
    qp = analysis.q.probs
    lim = x * x / analysis.sigma_q_sq

    def f(th):
        den = (np.sin(0.5 * th * z) ** 2) @ qp
        if den == 0.0:
            return lim
        return np.sin(0.5 * x * th) ** 2 / den

    return f


def potential_kernel_a(analysis, x, tol=1e-10):
    """Potential kernel ``a(x) = Σ_k [q^k(0) - q^k(x)]`` of the symmetrized walk.

    Evaluated as ``(1/π) ∫_0^π (1 - cos xθ) / (1 - φ_q(θ)) dθ`` with both
    numerator and denominator in half-angle sine form, so the integrand is
    smooth through ``θ = 0`` (limit ``x² / σ_q²``) and no interval needs to
    be excised.
    """
    _require_1d(analysis, "potential_kernel_a")
    x = abs(int(x))
    if x == 0:
        return 0.0
    key = ("a", x, tol)
    if key not in analysis._memo:
        analysis._memo[key] = _potential_kernel_quad(analysis, x, tol)
    return analysis._memo[key]


def _potential_kernel_quad(analysis, x, tol):
    f = _a_integrand(analysis, x)
    pts = np.linspace(0.0, pi, min(x, 400) + 1)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        v, _ = integrate.quad(f, lo, hi, epsabs=tol / len(pts), epsrel=1e-13, limit=200)
        total += v
    return total / pi


def potential_kernel_partial(analysis, xs, K, tail=True, trim_eps=1e-18):
    """Partial-sum route to ``a(x)``: ``Σ_{k<K} [q^k(0) - q^k(x)]``.

    With ``tail=True`` the remainder ``Σ_{k>=K}`` is added using the Gaussian
    local approximation of ``q^k`` (error ``O(x⁴ K^{-3/2})``).  Returns an
    array aligned with ``xs``.
    """
    _require_1d(analysis, "potential_kernel_partial")
    xs = np.abs(np.asarray(xs, dtype=np.int64))
    acc = np.zeros(xs.shape)
    for dist in iter_powers(analysis, "q", K - 1, trim_eps=trim_eps):
        acc += dist.at(0) - dist.at(xs)
    if tail:
        acc += np.array([_gauss_tail_a(analysis.sigma_q_sq, int(x), K) for x in xs.ravel()]).reshape(xs.shape)
    return acc


def _gauss_tail_a(s2, x, K):
    # Σ_{k>=K} [g_k(0) - g_k(x)], g_k the N(0, k s2) density, by Euler-Maclaurin
    if x == 0:
        return 0.0
    c = x * x / (2.0 * s2)

    def f(k):
        return (1.0 - np.exp(-c / k)) / np.sqrt(2 * pi * s2 * k)

    # ∫_K^∞ f = √(c / 2π s2) ∫_0^{c/K} u^{-3/2} (1 - e^{-u}) du
    umax = c / K
    g = lambda u: -np.expm1(-u) / u if u > 0 else 1.0
    integral, _ = integrate.quad(g, 0.0, umax, weight="alg", wvar=(-0.5, 0.0), epsabs=1e-15, epsrel=1e-12)
    integral *= sqrt(c / (2 * pi * s2))
    h = 1e-3 * K
    fp = (f(K + h) - f(K - h)) / (2 * h)
    return integral + 0.5 * f(K) - fp / 12.0


# --------------------------------------------------------------------------
# Green function (d >= 3)


def _product_factors(spec):
    """Marginal kernels when ``p`` is a product measure, else ``None``."""
    off, pr = spec.offsets, spec.probs
    d = off.shape[1]
    margs = []
    for i in range(d):
        vals, inv = np.unique(off[:, i], return_inverse=True)
        margs.append((vals, np.bincount(inv, weights=pr)))
    table = {tuple(o): p for o, p in zip(off.tolist(), pr)}
    grids = np.meshgrid(*[m[0] for m in margs], indexing="ij")
    probs = np.ones(grids[0].shape)
    for i, m in enumerate(margs):
        probs = probs * m[1].reshape([-1 if j == i else 1 for j in range(d)])
    for idx in np.ndindex(probs.shape):
        x = tuple(int(g[idx]) for g in grids)
        if abs(table.get(x, 0.0) - probs[idx]) > 1e-14:
            return None
    return [KernelSpec(m[0][:, None], m[1]) for m in margs]


def green_function(analysis, x, K, fit_terms=None):
    """Truncated Green function ``Σ_{k<=K} q^k(0, x)`` with a fitted tail bound.

    The last ``fit_terms`` computed terms are fitted by ``C k^{-d/2}`` and the
    fitted tail is summed exactly with the Hurwitz zeta function.  Product
    kernels factorize per coordinate, which makes large ``K`` cheap; other
    kernels use dense ``d``-dimensional power tables (``ResourceLimit`` if
    they do not fit the cell cap).

    Returns
    -------
    (value, tail_bound)
    """
    d = analysis.dimension
    if d < 3:
        raise DimensionUnsupported("the Green function is finite only in d >= 3 (transience)")
    x = tuple(int(v) for v in x)
    factors = _product_factors(analysis.spec)
    terms = np.empty(K + 1)
    if factors is not None:
        # one 1-D power sequence per distinct marginal
        groups = {}
        for f, xi in zip(factors, x):
            key = (tuple(f.offsets[:, 0].tolist()), tuple(f.probs.tolist()))
            groups.setdefault(key, (f, []))[1].append(xi)
        terms[:] = 1.0
        for f, xs in groups.values():
            xs = np.array(xs)
            for dist in iter_powers(KernelAnalysis(f), "q", K, trim_eps=1e-18):
                terms[dist.k] *= np.prod(dist.at(xs))
    else:
        for k in range(K + 1):
            terms[k] = convolve_power(analysis, "q", k).at(x)
    value = float(terms.sum())
    tail = _fitted_tail(terms, d / 2.0, fit_terms)
    return value, tail


def _fitted_tail(terms, expo, fit_terms=None):
    K = len(terms) - 1
    m = fit_terms or max(8, K // 10)
    ks = np.arange(max(1, K - m + 1), K + 1)
    vals = terms[ks]
    pos = vals > 0
    if K < 2 or not pos.any():
        # nothing reachable yet: bound by the worst case of a normalized walk
        return float(special.zeta(expo, K + 1))
    C = float(np.max(vals[pos] * ks[pos] ** expo))
    return C * float(special.zeta(expo, K + 1))


# --------------------------------------------------------------------------
# local CLT sum


def local_clt_sum(analysis, which, t, a, n):
    """Compare ``n^{-1/2} Σ_{k<⌊nt⌋} P(S_k = ⌊a√n⌋)`` with its limit.

    For ``which='p'`` the walk is recentred by shifting the target to
    ``⌊a√n⌋ + ⌊k μ̄⌋`` at step ``k``.

    Returns
    -------
    (lhs, rhs) with rhs ``= σ^{-2} ∫_0^{σ² t} (2πv)^{-1/2} e^{-a²/2v} dv``.
    """
    _require_1d(analysis, "local_clt_sum")
    s2 = analysis.sigma1_sq if which == "p" else analysis.sigma_q_sq
    mu = float(analysis.mean[0]) if which == "p" else 0.0
    an = int(np.floor(a * sqrt(n)))
    kmax = int(np.floor(n * t))
    lhs = 0.0
    if kmax > 0:
        for k, dist in enumerate(iter_powers(analysis, which, kmax - 1, trim_eps=1e-18)):
            lhs += dist.at(an + int(np.floor(k * mu)))
    lhs /= sqrt(n)
    return lhs, lclt_limit(s2, t, a)


def lclt_limit(s2, t, a):
    """``σ^{-2} ∫_0^{σ² t} (2πv)^{-1/2} exp(-a²/2v) dv``."""
    if t <= 0:
        return 0.0
    f = lambda v: np.exp(-a * a / (2 * v)) / np.sqrt(2 * pi * v) if v > 0 else 0.0
    val, _ = integrate.quad(f, 0.0, s2 * t, epsabs=1e-13, epsrel=1e-12)
    return val / s2


# --------------------------------------------------------------------------
# smoothness


def smoothness_profile(analysis, ts):
    """``√t · Σ_x |p^t(x) - p^t(x-1)|`` for each ``t`` in ``ts`` (d = 1)."""
    _require_1d(analysis, "smoothness_profile")
    want = sorted(set(int(t) for t in ts))
    out = {}
    for dist in iter_powers(analysis, "p", want[-1]):
        if dist.k in want:
            v = np.concatenate([[0.0], dist.values, [0.0]])
            out[dist.k] = sqrt(dist.k) * float(np.abs(np.diff(v)).sum())
    return np.array([out[int(t)] for t in ts])


def table_csv(path, dist):
    """Write a 1-D table as CSV ``x,value``."""
    from .io import write_csv

    write_csv(path, ["x", "value"], dist.rows())
