"""Hammersley serial harness toolkit.

Exact kernel and covariance numerics, light-cone simulation of the height and
increment dynamics, invariant-law samplers and the d = 1 Edwards-Wilkinson
fluctuation experiment.
"""

__version__ = "0.1.0"

from ._backend import NAME as BACKEND  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    DimensionUnsupported,
    HarnessError,
    RejectedKernel,
    ResourceLimit,
    UnsupportedOrder,
    WindowTooSmall,
)
from .kernel import KernelAnalysis, KernelSpec, lazy_kernel, validate_kernel  # noqa: E402
from .noise import NoiseModel, NoiseSource  # noqa: E402

__all__ = [
    "BACKEND",
    "ConfigError",
    "DimensionUnsupported",
    "HarnessError",
    "KernelAnalysis",
    "KernelSpec",
    "NoiseModel",
    "NoiseSource",
    "RejectedKernel",
    "ResourceLimit",
    "UnsupportedOrder",
    "WindowTooSmall",
    "lazy_kernel",
    "validate_kernel",
]
