"""Pure NumPy implementations of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_core`` extension.  Both produce the same noise field for the same key;
values can differ in the last ulp because transcendental functions come
from different math libraries.
"""

import numpy as np

NAME = "numpy"

_MASK = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_S32 = np.uint64(32)

GAUSSIAN, RADEMACHER, UNIFORM, TWO_POINT = 0, 1, 2, 3


def _u32(a):
    return np.asarray(a).astype(np.int64).astype(np.uint64) & _MASK


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32-10 block function on broadcastable uint32-valued arrays."""
    c0, c1, c2, c3 = np.broadcast_arrays(_u32(c0), _u32(c1), _u32(c2), _u32(c3))
    k0 = _u32(k0)
    k1 = _u32(k1)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _S32) ^ c3 ^ k1,
            p0 & _MASK,
        )
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


def _unit(hi, lo):
    # 53-bit grid midpoints: strictly inside (0, 1)
    return ((hi >> np.uint64(5)).astype(np.float64) * 67108864.0
            + (lo >> np.uint64(6)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


# Wichura (1988), algorithm AS241 PPND16
_A = (3.3871328727963666080e0, 1.3314166789178437745e+2, 1.9715909503065514427e+3,
      1.3731693765509461125e+4, 4.5921953931549871457e+4, 6.7265770927008700853e+4,
      3.3430575583588128105e+4, 2.5090809287301226727e+3)
_B = (1.0, 4.2313330701600911252e+1, 6.8718700749205790830e+2, 5.3941960214247511077e+3,
      2.1213794301586595867e+4, 3.9307895800092710610e+4, 2.8729085735721942674e+4,
      5.2264952788528545610e+3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(c, r):
    acc = c[7]
    for k in range(6, -1, -1):
        acc = acc * r + c[k]
    return acc


def normal_ppf(u):
    """Standard normal quantile, AS241 (relative accuracy about 1e-16)."""
    u = np.asarray(u, dtype=np.float64)
    q = u - 0.5
    out = np.empty_like(u)
    central = np.abs(q) <= 0.425
    r = 0.180625 - q[central] * q[central]
    out[central] = q[central] * _poly(_A, r) / _poly(_B, r)
    tail = ~central
    if tail.any():
        qt = q[tail]
        r = np.sqrt(-np.log(np.where(qt < 0.0, u[tail], 1.0 - u[tail])))
        near = r <= 5.0
        val = np.where(near, _poly(_C, r - 1.6) / _poly(_D, r - 1.6),
                       _poly(_E, r - 5.0) / _poly(_F, r - 5.0))
        out[tail] = np.where(qt < 0.0, -val, val)
    return out


def noise_values(k0, k1, family, params, t, x, x2=0, x3=0):
    """Noise at lattice keys ``(t, x, x2, x3)``; arrays broadcast.

    Sites are paired: ``x`` and ``x ^ 1`` share one Philox block, the even
    site taking the first half of the output and the odd site the second.
    """
    t = np.asarray(t, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    w0, w1, w2, w3 = philox4x32(t, x >> 1, x2, x3, k0, k1)
    odd = (x & 1).astype(bool)
    u = np.where(odd, _unit(w2, w3), _unit(w0, w1))
    if family == GAUSSIAN:
        return params[0] * normal_ppf(u)
    if family == RADEMACHER:
        return np.where(u < 0.5, -params[0], params[0])
    if family == UNIFORM:
        return (2.0 * u - 1.0) * params[0]
    if family == TWO_POINT:
        return np.where(u < params[2], params[0], params[1])
    raise ValueError(f"unknown noise family code {family}")


def fill_noise(out, k0, k1, family, params, t, x0):
    """Write the noise at sites ``x0 .. x0+len(out)-1`` and time ``t`` into ``out``."""
    out[:] = noise_values(k0, k1, family, params, t,
                          np.arange(x0, x0 + out.shape[0], dtype=np.int64))


def cone_evolve(h, lo, t0, nsteps, offsets, probs, k0, k1, family, params,
                noise_on, tgt_t, tgt_x, out):
    """Advance a 1-D height window ``nsteps`` steps in place.

    ``h[:len]`` holds heights at sites ``lo, lo+1, ...`` and time ``t0``.
    The window shrinks each step by the kernel span so every stored value is
    exact.  Targets ``(tgt_t[i], tgt_x[i])`` (sorted by time) are read into
    ``out[i]`` as they are reached; unreachable targets give NaN.
    Returns ``(lo, length)`` of the final window.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    zmin = int(offsets.min())
    zmax = int(offsets.max())
    span = zmax - zmin
    shifts = [int(o) - zmin for o in offsets]
    n = h.shape[0]
    ntg = len(tgt_t)
    j = 0
    t = t0

    def record(t, lo, n, j):
        while j < ntg and tgt_t[j] <= t:
            if tgt_t[j] == t and lo <= tgt_x[j] < lo + n:
                out[j] = h[tgt_x[j] - lo]
            else:
                out[j] = np.nan
            j += 1
        return j

    j = record(t, lo, n, j)
    for _ in range(nsteps):
        n_new = n - span
        if n_new <= 0:
            break
        lo = lo - zmin
        acc = probs[0] * h[shifts[0]:shifts[0] + n_new]
        for pj, sj in zip(probs[1:], shifts[1:]):
            acc = acc + pj * h[sj:sj + n_new]
        t += 1
        if noise_on:
            acc = acc + noise_values(k0, k1, family, params, t,
                                     np.arange(lo, lo + n_new, dtype=np.int64))
        h[:n_new] = acc
        n = n_new
        j = record(t, lo, n, j)
    while j < ntg:
        out[j] = np.nan
        j += 1
    return lo, n
