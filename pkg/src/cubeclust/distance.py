"""Euclidean distances evaluated with one fixed floating-point recipe.

Every distance in the package goes through :func:`cross` or :func:`to_many`.
Both sum squared coordinate differences strictly left to right, so a pair
gets a bit-identical distance no matter which code path asks for it. The
equivalence checks between the cube-based pipelines and the brute-force
oracles compare slice thresholds exactly and rely on this.
"""

from __future__ import annotations

import numpy as np

#: Upper bound on the number of entries in one distance block.
BLOCK = 1 << 20


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance matrix between the rows of ``a`` (p, n) and ``b`` (q, n)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[0]), dtype=np.float64)
    for axis in range(a.shape[1]):
        diff = a[:, axis, None] - b[None, :, axis]
        diff *= diff
        out += diff
    return np.sqrt(out, out=out)


def to_many(p: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from a single point ``p`` to every row of ``b``."""
    out = np.zeros(b.shape[0], dtype=np.float64)
    for axis in range(b.shape[1]):
        diff = p[axis] - b[:, axis]
        diff *= diff
        out += diff
    return np.sqrt(out, out=out)


def paired(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise distances ``d(a[i], b[i])``."""
    out = np.zeros(a.shape[0], dtype=np.float64)
    for axis in range(a.shape[1]):
        diff = a[:, axis] - b[:, axis]
        diff *= diff
        out += diff
    return np.sqrt(out, out=out)


def row_blocks(n_rows: int, n_cols: int, block: int = BLOCK):
    """Yield ``(start, stop)`` row ranges keeping blocks under ``block`` cells."""
    step = max(1, block // max(1, n_cols))
    for start in range(0, n_rows, step):
        yield start, min(n_rows, start + step)


class DistanceCounter:
    """Tally of point-pair distance evaluations."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def __int__(self):
        return self.count

    def __repr__(self):
        return f"DistanceCounter({self.count})"


def gathered(p: np.ndarray, cand: np.ndarray) -> np.ndarray:
    """Distances ``d(p[i], cand[i, j])`` for ``p`` (q, n) and ``cand`` (q, c, n)."""
    out = np.zeros(cand.shape[:2], dtype=np.float64)
    for axis in range(p.shape[1]):
        diff = p[:, axis, None] - cand[:, :, axis]
        diff *= diff
        out += diff
    return np.sqrt(out, out=out)
