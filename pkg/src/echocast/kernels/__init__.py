"""Kernel backend selection.

The compiled Cython extension is preferred; a pure-NumPy fallback with
identical semantics is used when the extension is unavailable.  Set
``ECHOCAST_KERNEL=python`` (or ``compiled``) to force a backend.
`benchmarks/kernel_benchmark.py` compares the two.
"""

import os

from . import _fallback

ACTIVATIONS = {"tanh": 0, "relu": 1, "identity": 2}

_forced = os.environ.get("ECHOCAST_KERNEL", "").strip().lower()
if _forced not in {"", "compiled", "python"}:
    raise ImportError(f"ECHOCAST_KERNEL must be 'compiled' or 'python', got {_forced!r}")

if _forced == "python":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _compiled as _impl
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        _impl = _fallback
        BACKEND = "python"

run_states = _impl.run_states


def available_backends():
    """Importable backends, keyed by name."""
    out = {"python": _fallback}
    try:
        from . import _compiled
        out["compiled"] = _compiled
    except ImportError:
        pass
    return out
