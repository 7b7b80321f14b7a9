"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the
pure-Python reference implementation is used. PROBE_KERNELS=python forces
the fallback, PROBE_KERNELS=cython insists on the extension (import error
if it is missing). ``BACKEND`` names the active choice.
"""

import os

import numpy as np

from . import _ref

_requested = os.environ.get("PROBE_KERNELS", "auto").strip().lower()

if _requested in ("auto", ""):
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _ref
        BACKEND = "python"
elif _requested in ("python", "py"):
    _impl = _ref
    BACKEND = "python"
elif _requested in ("cython", "c", "compiled"):
    from . import _core as _impl

    BACKEND = "cython"
else:
    raise ValueError(f"PROBE_KERNELS must be auto, python or cython, got {_requested!r}")

exact_phi_from_table = _impl.exact_phi_from_table
patch_stats = _impl.patch_stats
fill_patches = _impl.fill_patches
fnv1a64 = _impl.fnv1a64


def popcount_table(n: int) -> np.ndarray:
    """Popcounts of 0 .. 2**n - 1 as uint8 (n <= 16)."""
    if not 0 <= n <= 16:
        raise ValueError("popcount_table supports n in [0, 16]")
    pc = np.zeros(1, dtype=np.uint8)
    for _ in range(n):
        pc = np.concatenate([pc, pc + 1])
    return pc
