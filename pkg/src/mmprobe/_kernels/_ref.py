"""Pure-Python/numpy reference implementations of the hot kernels.

The compiled extension (`_core`) implements the same four functions with
identical semantics; this module is the fallback selected at import time
when the extension is unavailable (or when PROBE_KERNELS=python).
"""

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


def exact_phi_from_table(values, n, size_weights, popcounts):
    """Per-entity attribution from a full coalition value table.

    ``values[m]`` is the game value of the coalition whose bitmask is ``m``
    (bit t set = entity t present). ``size_weights[k]`` is the classical
    weight k!(n-k-1)!/n! for coalitions of size k, ``popcounts[m]`` the
    precomputed popcount of m. Returns a float64 array of length n.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    masks = np.arange(values.shape[0], dtype=np.int64)
    phi = np.empty(n, dtype=np.float64)
    for t in range(n):
        absent = masks[(masks >> t) & 1 == 0]
        diffs = values[absent | (1 << t)] - values[absent]
        phi[t] = float(np.dot(size_weights[popcounts[absent]], diffs))
    return phi


def patch_stats(img, row_edges, col_edges):
    """Mean, min and max intensity per patch of a banded grid.

    Patches are row-major over the row/column bands delimited by the edge
    arrays. Returns (means, mins, maxs) as float64/uint8/uint8 arrays.
    """
    nr = len(row_edges) - 1
    nc = len(col_edges) - 1
    means = np.empty(nr * nc, dtype=np.float64)
    mins = np.empty(nr * nc, dtype=np.uint8)
    maxs = np.empty(nr * nc, dtype=np.uint8)
    k = 0
    for i in range(nr):
        for j in range(nc):
            block = img[row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]]
            means[k] = float(block.mean())
            mins[k] = block.min()
            maxs[k] = block.max()
            k += 1
    return means, mins, maxs


def fill_patches(img, row_edges, col_edges, keep, fill):
    """Copy of ``img`` with every non-kept patch set to ``fill``."""
    out = img.copy()
    nr = len(row_edges) - 1
    nc = len(col_edges) - 1
    k = 0
    for i in range(nr):
        for j in range(nc):
            if not keep[k]:
                out[row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]] = fill
            k += 1
    return out


def fnv1a64(data):
    """64-bit FNV-1a hash of a bytes object."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h
