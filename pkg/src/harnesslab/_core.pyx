# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: counter-based noise and 1-D light-cone evolution.

Mirrors ``harnesslab._fallback`` function for function.
"""

import numpy as np

from libc.math cimport log, sqrt, fabs, NAN
from libc.stdint cimport uint32_t, uint64_t, int64_t

NAME = "cython"

GAUSSIAN, RADEMACHER, UNIFORM, TWO_POINT = 0, 1, 2, 3

cdef enum:
    LANES = 8


cdef inline void _philox(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3,
                         uint32_t k0, uint32_t k1, uint32_t* w) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t n0, n2
    cdef int i
    for i in range(10):
        p0 = <uint64_t>0xD2511F53 * c0
        p1 = <uint64_t>0xCD9E8D57 * c2
        n0 = <uint32_t>(p1 >> 32) ^ c1 ^ k0
        n2 = <uint32_t>(p0 >> 32) ^ c3 ^ k1
        c1 = <uint32_t>p1
        c3 = <uint32_t>p0
        c0 = n0
        c2 = n2
        k0 = k0 + <uint32_t>0x9E3779B9
        k1 = k1 + <uint32_t>0xBB67AE85
    w[0] = c0
    w[1] = c1
    w[2] = c2
    w[3] = c3


cdef inline void _philox_lanes(uint32_t* c0, uint32_t* c1, uint32_t* c2, uint32_t* c3,
                               uint32_t k0, uint32_t k1) noexcept nogil:
    # LANES independent blocks in lockstep so the multiplies pipeline
    cdef uint64_t p0, p1
    cdef uint32_t n0, n2
    cdef int i, l
    for i in range(10):
        for l in range(LANES):
            p0 = <uint64_t>0xD2511F53 * c0[l]
            p1 = <uint64_t>0xCD9E8D57 * c2[l]
            n0 = <uint32_t>(p1 >> 32) ^ c1[l] ^ k0
            n2 = <uint32_t>(p0 >> 32) ^ c3[l] ^ k1
            c1[l] = <uint32_t>p1
            c3[l] = <uint32_t>p0
            c0[l] = n0
            c2[l] = n2
        k0 = k0 + <uint32_t>0x9E3779B9
        k1 = k1 + <uint32_t>0xBB67AE85


cdef inline double _unit(uint32_t hi, uint32_t lo) noexcept nogil:
    # 53-bit grid midpoints: strictly inside (0, 1)
    return ((hi >> 5) * 67108864.0 + (lo >> 6) + 0.5) * (1.0 / 9007199254740992.0)


cdef inline double _ppf_central(double q) noexcept nogil:
    cdef double r = 0.180625 - q * q
    return q * (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r
                         + 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r
                       + 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r
                     + 1.3314166789178437745e+2) * r + 3.3871328727963666080e0) / \
                   (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r
                         + 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r
                       + 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r
                     + 4.2313330701600911252e+1) * r + 1.0)


cdef inline double _ppf(double u) noexcept nogil:
    # Wichura (1988), algorithm AS241 PPND16
    cdef double q = u - 0.5
    cdef double r, val
    if fabs(q) <= 0.425:
        return _ppf_central(q)
    r = sqrt(-log(u if q < 0.0 else 1.0 - u))
    if r <= 5.0:
        r = r - 1.6
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0) / \
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0) / \
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    return -val if q < 0.0 else val


cdef inline double _transform(double u, int family, double* prm) noexcept nogil:
    if family == 0:
        return prm[0] * _ppf(u)
    if family == 1:
        return -prm[0] if u < 0.5 else prm[0]
    if family == 2:
        return (2.0 * u - 1.0) * prm[0]
    return prm[0] if u < prm[2] else prm[1]


cdef inline void _pair(int64_t t, int64_t x, int64_t x2, int64_t x3,
                       uint32_t k0, uint32_t k1, int family, double* prm,
                       double* even, double* odd) noexcept nogil:
    # noise at sites 2*(x>>1) and 2*(x>>1)+1, which share one Philox block
    cdef uint32_t w[4]
    _philox(<uint32_t>t, <uint32_t>(x >> 1), <uint32_t>x2, <uint32_t>x3, k0, k1, w)
    even[0] = _transform(_unit(w[0], w[1]), family, prm)
    odd[0] = _transform(_unit(w[2], w[3]), family, prm)


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Scalar Philox4x32-10 block (for known-answer tests)."""
    cdef uint32_t w[4]
    _philox(<uint32_t>(c0 & 0xFFFFFFFF), <uint32_t>(c1 & 0xFFFFFFFF),
            <uint32_t>(c2 & 0xFFFFFFFF), <uint32_t>(c3 & 0xFFFFFFFF),
            <uint32_t>(k0 & 0xFFFFFFFF), <uint32_t>(k1 & 0xFFFFFFFF), w)
    return w[0], w[1], w[2], w[3]


def noise_values(k0, k1, int family, params, t, x, x2=0, x3=0):
    """Noise at lattice keys ``(t, x, x2, x3)``; arrays broadcast."""
    cdef double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    bt, bx, b2, b3 = np.broadcast_arrays(
        np.asarray(t, dtype=np.int64), np.asarray(x, dtype=np.int64),
        np.asarray(x2, dtype=np.int64), np.asarray(x3, dtype=np.int64))
    shape = bt.shape
    cdef const int64_t[::1] vt = np.ascontiguousarray(bt).ravel()
    cdef const int64_t[::1] vx = np.ascontiguousarray(bx).ravel()
    cdef const int64_t[::1] v2 = np.ascontiguousarray(b2).ravel()
    cdef const int64_t[::1] v3 = np.ascontiguousarray(b3).ravel()
    res = np.empty(vt.shape[0], dtype=np.float64)
    cdef double[::1] out = res
    cdef Py_ssize_t i
    cdef double ev, od
    cdef uint32_t kk0 = <uint32_t>(k0 & 0xFFFFFFFF)
    cdef uint32_t kk1 = <uint32_t>(k1 & 0xFFFFFFFF)
    with nogil:
        for i in range(vt.shape[0]):
            _pair(vt[i], vx[i], v2[i], v3[i], kk0, kk1, family, &prm[0], &ev, &od)
            out[i] = od if (vx[i] & 1) else ev
    return res.reshape(shape)


def fill_noise(double[::1] out, k0, k1, int family, params, int64_t t, int64_t x0):
    """Write the noise at sites ``x0 .. x0+len(out)-1`` and time ``t`` into ``out``."""
    cdef double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef uint32_t kk0 = <uint32_t>(k0 & 0xFFFFFFFF)
    cdef uint32_t kk1 = <uint32_t>(k1 & 0xFFFFFFFF)
    with nogil:
        _fill(&out[0], out.shape[0], kk0, kk1, family, &prm[0], t, x0)


cdef void _fill(double* out, Py_ssize_t n, uint32_t k0, uint32_t k1, int family,
                double* prm, int64_t t, int64_t x0) noexcept nogil:
    cdef uint32_t c0[LANES]
    cdef uint32_t c1[LANES]
    cdef uint32_t c2[LANES]
    cdef uint32_t c3[LANES]
    cdef double u[2 * LANES]
    cdef double v[2 * LANES]
    cdef int64_t b0, b, x
    cdef Py_ssize_t nb, l, idx
    if n <= 0:
        return
    b0 = x0 >> 1
    nb = ((x0 + n - 1) >> 1) - b0 + 1
    b = 0
    while b < nb:
        for l in range(LANES):
            c0[l] = <uint32_t>t
            c1[l] = <uint32_t>(b0 + b + l)
            c2[l] = 0
            c3[l] = 0
        _philox_lanes(c0, c1, c2, c3, k0, k1)
        for l in range(LANES):
            u[l] = _unit(c0[l], c1[l])
            u[LANES + l] = _unit(c2[l], c3[l])
        if family == 0:
            # branch-free central rational for all lanes, then patch the tails
            for l in range(2 * LANES):
                v[l] = prm[0] * _ppf_central(u[l] - 0.5)
            for l in range(2 * LANES):
                if fabs(u[l] - 0.5) > 0.425:
                    v[l] = prm[0] * _ppf(u[l])
        else:
            for l in range(2 * LANES):
                v[l] = _transform(u[l], family, prm)
        for l in range(LANES):
            if b + l >= nb:
                break
            x = 2 * (b0 + b + l)
            idx = x - x0
            if idx >= 0:
                out[idx] = v[l]
            if idx + 1 < n:
                out[idx + 1] = v[LANES + l]
        b += LANES


def cone_evolve(double[::1] h, int64_t lo, int64_t t0, int64_t nsteps,
                offsets, probs, k0, k1, int family, params, bint noise_on,
                tgt_t, tgt_x, double[::1] out):
    """Advance a 1-D height window ``nsteps`` steps in place.

    Same contract as ``_fallback.cone_evolve``; returns ``(lo, length)``.
    """
    cdef int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef double[::1] pr = np.ascontiguousarray(probs, dtype=np.float64)
    cdef double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef int64_t[::1] tt = np.ascontiguousarray(tgt_t, dtype=np.int64)
    cdef int64_t[::1] tx = np.ascontiguousarray(tgt_x, dtype=np.int64)
    cdef uint32_t kk0 = <uint32_t>(k0 & 0xFFFFFFFF)
    cdef uint32_t kk1 = <uint32_t>(k1 & 0xFFFFFFFF)
    cdef Py_ssize_t m = off.shape[0]
    cdef int64_t zmin = off[0], zmax = off[0]
    cdef Py_ssize_t a
    for a in range(m):
        if off[a] < zmin:
            zmin = off[a]
        if off[a] > zmax:
            zmax = off[a]
    sh_arr = np.asarray(off) - zmin
    cdef int64_t[::1] sh = np.ascontiguousarray(sh_arr, dtype=np.int64)
    noise_buf = np.empty(max(h.shape[0], 1), dtype=np.float64)
    cdef double[::1] nb = noise_buf
    cdef int64_t span = zmax - zmin
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t n_new, i, j = 0, ntg = tt.shape[0]
    cdef int64_t t = t0, step
    cdef double v
    with nogil:
        j = _record(&h[0] if n > 0 else NULL, n, lo, t, &tt[0] if ntg > 0 else NULL,
                    &tx[0] if ntg > 0 else NULL, ntg, j, &out[0] if ntg > 0 else NULL)
        for step in range(nsteps):
            n_new = n - span
            if n_new <= 0:
                break
            lo = lo - zmin
            t += 1
            if noise_on:
                _fill(&nb[0], n_new, kk0, kk1, family, &prm[0], t, lo)
            for i in range(n_new):
                v = pr[0] * h[i + sh[0]]
                for a in range(1, m):
                    v = v + pr[a] * h[i + sh[a]]
                if noise_on:
                    v = v + nb[i]
                h[i] = v
            n = n_new
            if ntg > 0:
                j = _record(&h[0], n, lo, t, &tt[0], &tx[0], ntg, j, &out[0])
        while j < ntg:
            out[j] = NAN
            j += 1
    return lo, n


cdef Py_ssize_t _record(double* h, Py_ssize_t n, int64_t lo, int64_t t,
                        int64_t* tt, int64_t* tx, Py_ssize_t ntg, Py_ssize_t j,
                        double* out) noexcept nogil:
    while j < ntg and tt[j] <= t:
        if tt[j] == t and tx[j] >= lo and tx[j] < lo + n:
            out[j] = h[tx[j] - lo]
        else:
            out[j] = NAN
        j += 1
    return j
