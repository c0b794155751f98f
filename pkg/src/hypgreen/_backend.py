"""Select the compiled kernel core when available, else the numpy fallback.

Set ``HYPGREEN_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _core_py

core = _core_py
if os.environ.get("HYPGREEN_BACKEND", "").lower() != "python":
    try:
        from . import _core as _compiled  # type: ignore[attr-defined]

        core = _compiled
    except ImportError:  # extension not built
        core = _core_py

BACKEND = core.BACKEND


def get_core(name: str = None):
    """Return the backend module by name (``"compiled"`` or ``"python"``)."""
    if name is None:
        return core
    if name == "python":
        return _core_py
    if name == "compiled":
        from . import _core as _compiled  # type: ignore[attr-defined]

        return _compiled
    raise ValueError(f"unknown backend {name!r}")
