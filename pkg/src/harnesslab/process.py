"""Exact finite-window dynamics of the harness and its increments.

One step of the height process is

    h_{t+1}(x) = Σ_z p(z) h_t(x + z) + ξ_{t+1}(x).

Because ``p`` has finite range, the new values are exact on the old window
shrunk by the support extent, so iterating on a shrinking window (the light
cone) reproduces the infinite-lattice values with no boundary effects.
The dual sum over backward random-walk probabilities is provided as an
independent evaluator.
"""

from dataclasses import dataclass
from math import log, sqrt

import numpy as np

from . import _backend
from .errors import DimensionUnsupported, WindowTooSmall
from .kernel import convolve_power, iter_powers


@dataclass
class HeightField:
    """Heights on the box ``lo .. lo + shape - 1`` at time ``t``."""

    values: np.ndarray
    lo: tuple
    t: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.lo = tuple(int(v) for v in np.atleast_1d(self.lo))
        if len(self.lo) != self.values.ndim:
            raise ValueError("lo must have one entry per array axis")

    @property
    def dimension(self):
        return self.values.ndim

    @property
    def hi(self):
        return tuple(l + s - 1 for l, s in zip(self.lo, self.values.shape))

    def sites(self):
        return [np.arange(l, l + s) for l, s in zip(self.lo, self.values.shape)]

    def at(self, x):
        idx = tuple(int(a) - l for a, l in zip(np.atleast_1d(x), self.lo))
        if any(i < 0 or i >= s for i, s in zip(idx, self.values.shape)):
            raise WindowTooSmall(f"site {tuple(np.atleast_1d(x))} outside the window")
        return float(self.values[idx])

    def restrict(self, lo, hi):
        """Sub-box ``lo .. hi`` (inclusive); ``WindowTooSmall`` if not contained."""
        lo = tuple(int(v) for v in np.atleast_1d(lo))
        hi = tuple(int(v) for v in np.atleast_1d(hi))
        if any(a < b for a, b in zip(lo, self.lo)) or any(a > b for a, b in zip(hi, self.hi)):
            raise WindowTooSmall(f"requested box {lo}..{hi} not inside {self.lo}..{self.hi}")
        sl = tuple(slice(a - b, c - b + 1) for a, b, c in zip(lo, self.lo, hi))
        return HeightField(self.values[sl].copy(), lo, self.t)

    def rows(self):
        """``(t, x, h)`` rows for CSV (d = 1)."""
        xs = self.sites()[0]
        return ((self.t, int(x), float(v)) for x, v in zip(xs, self.values))


@dataclass
class IncrementField:
    """Nearest-neighbour increments ``η(x - e_i, x)``.

    ``values[i]`` is an array over the box ``lo .. lo + shape - 1`` holding
    ``η(x - e_i, x)`` at each site ``x``.
    """

    values: np.ndarray
    lo: tuple
    t: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.lo = tuple(int(v) for v in np.atleast_1d(self.lo))
        if self.values.ndim != len(self.lo) + 1 or self.values.shape[0] != len(self.lo):
            raise ValueError("values must have shape (d, *box)")

    @property
    def dimension(self):
        return len(self.lo)

    @property
    def shape(self):
        return self.values.shape[1:]

    @property
    def hi(self):
        return tuple(l + s - 1 for l, s in zip(self.lo, self.shape))

    @classmethod
    def from_height(cls, h):
        """Differences ``h(x) - h(x - e_i)`` on the box ``h.lo + 1 .. h.hi``."""
        d = h.dimension
        v = h.values
        core = tuple(slice(1, None) for _ in range(d))
        out = []
        for i in range(d):
            back = tuple(slice(0, -1) if j == i else slice(1, None) for j in range(d))
            out.append(v[core] - v[back])
        return cls(np.array(out), tuple(l + 1 for l in h.lo), h.t)

    @classmethod
    def from_1d(cls, eta, lo, t=0):
        return cls(np.asarray(eta, dtype=np.float64)[None, :], (lo,), t)

    @property
    def eta(self):
        """The d = 1 increments ``η(x - 1, x)`` as a flat array."""
        if self.dimension != 1:
            raise DimensionUnsupported("eta is the one-dimensional view")
        return self.values[0]

    def to_height(self, anchor=0, anchor_value=0.0):
        """Partial sums in d = 1, normalized so ``h(anchor) = anchor_value``.

        The returned window is ``lo - 1 .. hi``.
        """
        eta = self.eta
        lo = self.lo[0] - 1
        h = np.concatenate([[0.0], np.cumsum(eta)])
        if not lo <= anchor <= lo + len(eta):
            raise WindowTooSmall("anchor outside the increment window")
        h += anchor_value - h[anchor - lo]
        return HeightField(h, (lo,), self.t)

    def loop_residual(self):
        """Largest plaquette sum ``|η_i(x) - η_i(x-e_j) - η_j(x) + η_j(x-e_i)|`` (d >= 2).

        Zero for increments of a height function (additivity).
        """
        d = self.dimension
        worst = 0.0
        for i in range(d):
            for j in range(i + 1, d):
                def cut(shift):
                    return tuple(slice(0, -1) if k == shift else
                                 slice(1, None) if k in (i, j) else slice(None) for k in range(d))
                a, b = self.values[i], self.values[j]
                r = a[cut(None)] - a[cut(j)] - b[cut(None)] + b[cut(i)]
                worst = max(worst, float(np.abs(r).max(initial=0.0)))
        return worst


# --------------------------------------------------------------------------
# direct iteration


def _noise_grid(noise, t, lo, shape):
    if len(shape) == 1:
        return noise.row(t, lo[0], shape[0])
    grids = np.meshgrid(*[np.arange(l, l + s) for l, s in zip(lo, shape)], indexing="ij")
    return noise.at_sites(t, np.stack(grids, axis=-1))


def _step_nd(values, lo, offsets, probs):
    """One averaging step on a d-dimensional box; returns (new values, new lo)."""
    zmin = offsets.min(axis=0)
    zmax = offsets.max(axis=0)
    shape = tuple(int(s - (a - b)) for s, a, b in zip(values.shape, zmax, zmin))
    if min(shape) <= 0:
        raise WindowTooSmall("window exhausted by the light cone")
    acc = None
    for o, pr in zip(offsets, probs):
        sl = tuple(slice(int(a - b), int(a - b) + s) for a, b, s in zip(o, zmin, shape))
        term = pr * values[sl]
        acc = term if acc is None else acc + term
    return acc, tuple(int(l - z) for l, z in zip(lo, zmin))


def cone_window(analysis, lo, hi, t):
    """Window at time ``t`` reachable from the box ``lo .. hi`` at time 0."""
    off = analysis.spec.offsets
    zmin = off.min(axis=0)
    zmax = off.max(axis=0)
    lo = np.atleast_1d(lo) - t * zmin
    hi = np.atleast_1d(hi) - t * zmax
    return tuple(int(v) for v in lo), tuple(int(v) for v in hi)


def required_window(analysis, lo, hi, t):
    """Initial box whose light cone covers ``lo .. hi`` at time ``t``."""
    off = analysis.spec.offsets
    zmin = off.min(axis=0)
    zmax = off.max(axis=0)
    return (tuple(int(v) for v in np.atleast_1d(lo) + t * zmin),
            tuple(int(v) for v in np.atleast_1d(hi) + t * zmax))


def evolve_height(h0, analysis, noise, t_final, eval_window=None, backend=None):
    """Iterate the height dynamics ``t_final`` steps on the light cone.

    Parameters
    ----------
    h0 : HeightField
        Initial heights at time ``h0.t``; noise for step ``k`` is read at
        time ``h0.t + k``.
    analysis : KernelAnalysis
    noise : NoiseSource or None
        ``None`` means ``ξ ≡ 0``.
    t_final : int
        Number of steps.
    eval_window : (lo, hi), optional
        Inclusive box to return; defaults to the whole exact cone.

    Raises
    ------
    WindowTooSmall
        If the cone of ``h0`` does not cover ``eval_window``.
    """
    off = analysis.spec.offsets
    lo_f, hi_f = cone_window(analysis, h0.lo, h0.hi, t_final)
    if any(b < a for a, b in zip(lo_f, hi_f)):
        raise WindowTooSmall(f"window of {h0.values.shape} sites is exhausted after {t_final} steps")
    if eval_window is not None:
        elo, ehi = (tuple(np.atleast_1d(v).tolist()) for v in eval_window)
        if any(a < b for a, b in zip(elo, lo_f)) or any(a > b for a, b in zip(ehi, hi_f)):
            raise WindowTooSmall(f"eval window {elo}..{ehi} outside the exact cone {lo_f}..{hi_f}")
    if analysis.dimension == 1:
        be = _backend.get(backend)
        h = h0.values.copy()
        k0, k1 = noise.key if noise is not None else (0, 0)
        code = noise.model.code if noise is not None else 0
        prm = noise.model.params if noise is not None else np.zeros(1)
        lo, n = be.cone_evolve(h, h0.lo[0], h0.t, t_final, off[:, 0], analysis.spec.probs,
                               k0, k1, code, prm, noise is not None,
                               np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
        out = HeightField(h[:n].copy(), (lo,), h0.t + t_final)
    else:
        vals, lo = h0.values, h0.lo
        for k in range(1, t_final + 1):
            vals, lo = _step_nd(vals, lo, off, analysis.spec.probs)
            if noise is not None:
                vals = vals + _noise_grid(noise, h0.t + k, lo, vals.shape)
        out = HeightField(vals.copy(), lo, h0.t + t_final)
    if eval_window is not None:
        out = out.restrict(*eval_window)
    return out


def evolve_1d(h, lo, t0, nsteps, analysis, noise, targets=(), backend=None):
    """In-place 1-D light-cone iteration with snapshot targets.

    ``targets`` is a sequence of ``(t, x)`` pairs (any order).  Returns
    ``(values at targets, new lo, new length)``; ``h[:length]`` then holds
    the final window.
    """
    be = _backend.get(backend)
    tg = np.asarray(list(targets), dtype=np.int64).reshape(-1, 2)
    order = np.argsort(tg[:, 0], kind="stable")
    tt = np.ascontiguousarray(tg[order, 0])
    tx = np.ascontiguousarray(tg[order, 1])
    buf = np.empty(len(tt))
    k0, k1 = noise.key if noise is not None else (0, 0)
    code = noise.model.code if noise is not None else 0
    prm = noise.model.params if noise is not None else np.zeros(1)
    lo, n = be.cone_evolve(h, int(lo), int(t0), int(nsteps), analysis.spec.offsets[:, 0],
                           analysis.spec.probs, k0, k1, code, prm, noise is not None, tt, tx, buf)
    out = np.empty(len(tt))
    out[order] = buf
    return out, lo, n


def evolve_increment(eta0, analysis, noise, t_final, eval_window=None):
    """Iterate the increment dynamics directly.

    ``η_{t+1}(x - e_i, x) = Σ_z p(z) η_t(x + z - e_i, x + z) + ξ_{t+1}(x) - ξ_{t+1}(x - e_i)``.
    """
    off = analysis.spec.offsets
    pr = analysis.spec.probs
    d = analysis.dimension
    vals = [eta0.values[i] for i in range(d)]
    lo = eta0.lo
    for k in range(1, t_final + 1):
        new = []
        for i in range(d):
            v, nlo = _step_nd(vals[i], lo, off, pr)
            if noise is not None:
                t = eta0.t + k
                e = np.zeros(d, dtype=np.int64)
                e[i] = 1
                v = v + _noise_grid(noise, t, nlo, v.shape) - _noise_grid(noise, t, tuple(np.array(nlo) - e), v.shape)
            new.append(v)
        vals, lo = new, nlo
    out = IncrementField(np.array(vals), lo, eta0.t + t_final)
    if eval_window is not None:
        elo, ehi = (tuple(np.atleast_1d(v).tolist()) for v in eval_window)
        if any(a < b for a, b in zip(elo, out.lo)) or any(a > b for a, b in zip(ehi, out.hi)):
            raise WindowTooSmall(f"eval window {elo}..{ehi} outside the exact cone {out.lo}..{out.hi}")
        sl = (slice(None),) + tuple(slice(a - b, c - b + 1) for a, b, c in zip(elo, out.lo, ehi))
        out = IncrementField(out.values[sl].copy(), elo, out.t)
    return out


# --------------------------------------------------------------------------
# dual representation


def dual_evaluate(h0, analysis, noise, t, site):
    """Evaluate ``h_t(site)`` through backward transition probabilities.

    ``Σ_y p^t(site, y) h0(y) + Σ_{k=1}^{t} Σ_x p^{t-k}(site, x) ξ_k(x)``,
    with exact power tables and the same noise keys as ``evolve_height``.
    """
    site = tuple(int(v) for v in np.atleast_1d(site))
    d = analysis.dimension
    pt = convolve_power(analysis, "p", t)
    lo = tuple(s + l for s, l in zip(site, pt.lo))
    hi = tuple(s + h for s, h in zip(site, pt.hi))
    if any(a < b for a, b in zip(lo, h0.lo)) or any(a > b for a, b in zip(hi, h0.hi)):
        raise WindowTooSmall("initial window does not cover the backward light cone")
    sl = tuple(slice(a - b, c - b + 1) for a, b, c in zip(lo, h0.lo, hi))
    val = float(np.sum(pt.values * h0.values[sl]))
    if noise is not None:
        for k in range(1, t + 1):
            pk = convolve_power(analysis, "p", t - k)
            nlo = tuple(s + l for s, l in zip(site, pk.lo))
            xi = _noise_grid(noise, h0.t + k, nlo, pk.values.shape) if d > 1 else \
                noise.row(h0.t + k, nlo[0], pk.values.shape[0])
            val += float(np.sum(pk.values * xi))
    return val


# --------------------------------------------------------------------------
# exact variances


def variance_flat(analysis, noise_var, t):
    """Exact ``Var h_t(x)`` from a flat start: ``σξ² Σ_{k<t} q^k(0, 0)``."""
    return float(variance_flat_curve(analysis, noise_var, [t])[0])


def variance_flat_curve(analysis, noise_var, ts):
    """``variance_flat`` at each ``t`` in ``ts`` from a single pass."""
    ts = np.asarray(ts, dtype=np.int64)
    tmax = int(ts.max()) if ts.size else 0
    partial = np.zeros(tmax + 1)
    if tmax > 0:
        origin = (0,) * analysis.dimension
        vals = np.array([dist.at(origin if analysis.dimension > 1 else 0)
                         for dist in _q_powers(analysis, tmax - 1)])
        partial[1:] = np.cumsum(vals)
    return noise_var * partial[ts]


def _q_powers(analysis, kmax):
    if analysis.dimension == 1:
        return iter_powers(analysis, "q", kmax, trim_eps=1e-18)
    return (convolve_power(analysis, "q", k) for k in range(kmax + 1))


def loglog_slope(ts, values):
    """Least-squares slope of ``log values`` against ``log ts``."""
    x = np.log(np.asarray(ts, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def hoeffding_radius(width, m, eps):
    """Half-width outside which an ``m``-step walk with jumps in an interval of
    length ``width`` has mass at most ``eps`` (two-sided Hoeffding bound)."""
    if m <= 0:
        return 0.0
    return width * sqrt(m * log(2.0 / eps) / 2.0)


class DualPlan:
    """Backward-walk evaluation of ``h_{T_j}(y_j)`` for a fixed target list (d = 1).

    Uses ``h_T(y) = Σ_w p^T(w) h_0(y + w) + Σ_{k=1}^{T} Σ_w p^{T-k}(w) ξ_k(y + w)``
    with power tables cut to Hoeffding windows of mass defect at most
    ``trim_eps`` each.  The tables are built once and shared by all
    replicas, so a replica costs ``O(Σ_j T_j^{3/2})`` noise draws rather than
    the ``O(T²)`` of the full light cone.

    Parameters
    ----------
    analysis : KernelAnalysis
    targets : sequence of (T, y)
    trim_eps : float
        ``0`` keeps the exact (untrimmed) tables.
    """

    def __init__(self, analysis, targets, trim_eps=1e-18):
        if analysis.dimension != 1:
            raise DimensionUnsupported("DualPlan is one-dimensional")
        self.targets = [(int(T), int(y)) for T, y in targets]
        if any(T < 0 for T, _ in self.targets):
            raise ValueError("target times must be nonnegative")
        self.tmax = max(T for T, _ in self.targets)
        self.trim_eps = trim_eps
        self.tables = [(int(d.lo[0]), d.values) for d in iter_powers(analysis, "p", self.tmax, trim_eps)]
        spans = [(y + self.tables[T][0], y + self.tables[T][0] + len(self.tables[T][1]) - 1)
                 for T, y in self.targets]
        self.init_lo = min(a for a, _ in spans)
        self.init_hi = max(b for _, b in spans)
        # per noise time k: row window and (target, offset, table) triples
        self.rows = []
        for k in range(1, self.tmax + 1):
            items = []
            for j, (T, y) in enumerate(self.targets):
                if T >= k:
                    lo_m, vals = self.tables[T - k]
                    items.append((j, y + lo_m, vals))
            lo = min(a for _, a, _ in items)
            hi = max(a + len(v) - 1 for _, a, v in items)
            self.rows.append((k, lo, hi - lo + 1, [(j, a - lo, v) for j, a, v in items]))

    @property
    def noise_draws(self):
        """Noise values read per replica."""
        return sum(n for _, _, n, _ in self.rows)

    def evaluate(self, h0, noise):
        """Heights at the targets for initial heights ``h0`` (time 0) and ``noise``."""
        if h0.lo[0] > self.init_lo or h0.hi[0] < self.init_hi:
            raise WindowTooSmall("initial heights do not cover the trimmed backward cone")
        out = np.zeros(len(self.targets))
        base = h0.lo[0]
        for j, (T, y) in enumerate(self.targets):
            lo_m, vals = self.tables[T]
            a = y + lo_m - base
            out[j] = float(vals @ h0.values[a: a + len(vals)])
        if noise is not None:
            for k, lo, n, items in self.rows:
                row = noise.row(k, lo, n)
                for j, a, vals in items:
                    out[j] += float(vals @ row[a: a + len(vals)])
        return out
