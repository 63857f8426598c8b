"""Ordering and sign conventions shared by every eigensolver path."""

import numpy as np


def order_by_magnitude(vals):
    """Indices sorting by decreasing ``|lambda|``; ties: positive first, then by index.

    Magnitudes are compared after rounding to 12 significant digits so that
    pairs such as ``+1`` and ``-1 - 2e-16`` count as ties.
    """
    vals = np.asarray(vals, dtype=float)
    scale = max(1.0, float(np.max(np.abs(vals), initial=0.0)))
    mag = np.round(np.abs(vals) / scale, 12)
    return np.lexsort((np.arange(len(vals)), -vals, -mag))


def fix_signs(vecs):
    """Flip each column so its largest-magnitude entry (first on ties) is positive."""
    out = np.array(vecs, dtype=float, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        amax = np.max(np.abs(col))
        i = int(np.flatnonzero(np.abs(col) >= amax - 1e-12 * max(amax, 1.0))[0])
        if col[i] < 0:
            out[:, j] = -col
    return out
