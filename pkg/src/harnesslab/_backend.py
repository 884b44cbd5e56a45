"""Select the compiled core when available, else the NumPy fallback.

Set ``HARNESSLAB_BACKEND=numpy`` to force the fallback.
"""

import os

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = {"numpy": _fallback}
if _core is not None:
    BACKENDS["cython"] = _core

if os.environ.get("HARNESSLAB_BACKEND", "").lower() == "numpy" or _core is None:
    impl = _fallback
else:
    impl = _core

NAME = impl.NAME


def get(name=None):
    """Return a backend module by name (``None`` gives the active one)."""
    if name is None:
        return impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {sorted(BACKENDS)}") from None
