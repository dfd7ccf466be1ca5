"""Sweep kernel selection.

The compiled kernel is used when it was built and imports cleanly. Setting
``CDPG_PURE_PYTHON=1`` forces the pure-Python fallback.
"""

from __future__ import annotations

import os

from . import _sweep_py

try:
    from . import _sweep as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _sweep_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

if os.environ.get("CDPG_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    DEFAULT = "python"
else:
    DEFAULT = "compiled"


def get_backend(name: str | None = None):
    """Return the kernel module called ``name`` (default: the selected one)."""
    name = DEFAULT if name is None else name
    if name not in BACKENDS:
        raise ValueError(f"kernel backend {name!r} is not available; have {sorted(BACKENDS)}")
    return BACKENDS[name]
