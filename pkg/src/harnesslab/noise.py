"""Driving noise: mean-zero i.i.d. families with exact moments.

Values are generated statelessly from a counter-based generator
(Philox4x32-10) addressed by ``(t, x)`` and keyed by ``(seed, replica,
stream)``.  Any site can therefore be regenerated on demand, in any order and
from any thread, which is what lets the direct iteration and the dual
random-walk sum consume the same noise field without storing it.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import prod, sqrt

import numpy as np

from . import _backend
from .errors import ConfigError, DimensionUnsupported, UnsupportedOrder

FAMILIES = ("gaussian", "rademacher", "uniform", "two-point")
_ALIASES = {
    "normal": "gaussian",
    "rademacher-scaled": "rademacher",
    "uniform-centered": "uniform",
    "two-point-asymmetric": "two-point",
}
_CODES = {"gaussian": 0, "rademacher": 1, "uniform": 2, "two-point": 3}

# stream ids: independent key families for one (seed, replica)
STREAM_NOISE = 0
STREAM_INITIAL = 1
STREAM_GAUSS = 2
STREAM_BOOTSTRAP = 3

MAX_ORDER = 12


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. mean-zero noise law.

    Parameters
    ----------
    family : str
        One of ``gaussian``, ``rademacher`` (values ``±σ``), ``uniform``
        (on ``[-√3σ, √3σ]``) or ``two-point`` (asymmetric, see ``p``).
    variance : float
        ``σξ² > 0``.
    p : float
        Two-point family only: the probability of the positive atom
        ``σ√((1-p)/p)``; the other atom is ``-σ√(p/(1-p))``.
    """

    family: str = "gaussian"
    variance: float = 1.0
    p: float = 0.25

    def __post_init__(self):
        fam = _ALIASES.get(self.family, self.family)
        if fam not in FAMILIES:
            raise ConfigError(f"unknown noise family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", fam)
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ConfigError("noise variance must be finite and positive")
        if fam == "two-point" and not (0.0 < self.p < 1.0):
            raise ConfigError("two-point probability must lie in (0, 1)")

    @property
    def sigma(self):
        return sqrt(self.variance)

    @property
    def max_moment_order(self):
        """Highest finite moment order (all supported families are bounded or Gaussian)."""
        return float("inf")

    @property
    def code(self):
        return _CODES[self.family]

    @property
    def params(self):
        """Parameter vector passed to the backend kernels."""
        s = self.sigma
        if self.family == "uniform":
            return np.array([sqrt(3.0) * s])
        if self.family == "two-point":
            p = self.p
            return np.array([s * sqrt((1 - p) / p), -s * sqrt(p / (1 - p)), p])
        return np.array([s])

    @property
    def symmetric(self):
        return self.family != "two-point" or self.p == 0.5

    def moment(self, order):
        return moment(self, order)

    def to_dict(self):
        d = {"family": self.family, "variance": self.variance}
        if self.family == "two-point":
            d["p"] = self.p
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "family" not in d:
            raise ConfigError("noise spec needs a 'family' field")
        extra = set(d) - {"family", "variance", "p"}
        if extra:
            raise ConfigError(f"unknown noise fields {sorted(extra)}")
        return cls(d["family"], float(d.get("variance", 1.0)), float(d.get("p", 0.25)))


def moment(model, order):
    """Exact central moment ``E ξ^order`` for an even order in 2..12."""
    if not isinstance(order, (int, np.integer)) or order < 2 or order > MAX_ORDER or order % 2:
        raise UnsupportedOrder(f"moment order must be an even integer in [2, {MAX_ORDER}], got {order!r}")
    k = int(order)
    vk = model.variance ** (k // 2)  # σ^k without a square root
    if model.family == "gaussian":
        return vk * prod(range(k - 1, 0, -2))
    if model.family == "rademacher":
        return vk
    if model.family == "uniform":
        return 3 ** (k // 2) * vk / (k + 1)
    p = model.p
    return vk * (p * ((1 - p) / p) ** (k // 2) + (1 - p) * (p / (1 - p)) ** (k // 2))


def require_moment(model, order):
    """Raise ``ConfigError`` unless ``E|ξ|^order`` is finite."""
    if order > model.max_moment_order:
        raise ConfigError(f"{model.family} noise lacks a finite moment of order {order}")


@lru_cache(maxsize=65536)
def derive_key(seed, replica=0, stream=STREAM_NOISE):
    """Philox key ``(k0, k1)`` for one ``(seed, replica, stream)`` triple.

    Uses NumPy's ``SeedSequence`` hashing, so nearby seeds and replicas give
    unrelated keys.
    """
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica), int(stream)))
    k0, k1 = ss.generate_state(2, dtype=np.uint32)
    return int(k0), int(k1)


class NoiseSource:
    """The noise field of one replica: a ``NoiseModel`` bound to a key.

    ``None`` is used throughout the package for the degenerate field ``ξ ≡ 0``.
    """

    def __init__(self, model, seed=0, replica=0, stream=STREAM_NOISE, backend=None):
        self.model = model
        self.seed = seed
        self.replica = replica
        self.stream = stream
        self.key = derive_key(seed, replica, stream)
        self.backend = _backend.get(backend)

    def at(self, t, x):
        """Noise at time(s) ``t`` and 1-D site(s) ``x`` (broadcast)."""
        k0, k1 = self.key
        return self.backend.noise_values(k0, k1, self.model.code, self.model.params, t, x)

    def at_sites(self, t, sites):
        """Noise at time ``t`` for sites given as an ``(..., d)`` integer array, ``d <= 3``."""
        sites = np.asarray(sites, dtype=np.int64)
        d = sites.shape[-1]
        if d > 3:
            raise DimensionUnsupported("counter layout supports lattice dimension at most 3")
        cols = [sites[..., i] for i in range(d)] + [0] * (3 - d)
        k0, k1 = self.key
        return self.backend.noise_values(k0, k1, self.model.code, self.model.params, t, *cols)

    def row(self, t, lo, n):
        """Noise at time ``t`` on the 1-D sites ``lo .. lo+n-1``."""
        out = np.empty(n)
        if n:
            k0, k1 = self.key
            self.backend.fill_noise(out, k0, k1, self.model.code, self.model.params, int(t), int(lo))
        return out


def sample_noise(model, seed, t, x, replica=0):
    """Single noise value (or array) at key ``(t, x, replica)``."""
    return NoiseSource(model, seed, replica).at(t, x)


def standard_normals(seed, replica, n, stream=STREAM_GAUSS, row=0, backend=None):
    """``n`` keyed i.i.d. N(0, 1) values, reproducible per ``(seed, replica, stream, row)``."""
    src = NoiseSource(NoiseModel("gaussian", 1.0), seed, replica, stream, backend)
    return src.row(row, 0, n)
