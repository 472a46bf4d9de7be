"""The cube lattice of side ``eps / (2 sqrt(n))`` and point-to-cube indexing.

Cells are half-open, ``[j * side, (j + 1) * side)`` per axis, so every point
belongs to exactly one cube. Set relations between cubes (adjacency,
``m``-extensions) are evaluated on the integer keys, where the closed-cube
relation "shares a face, edge or corner" is Chebyshev index distance <= 1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimensionError, InvalidPointError, ParameterError

_KEY_LIMIT = 1 << 62


def _ceil_sqrt(n: int) -> int:
    r = math.isqrt(n)
    return r if r * r == n else r + 1


def derive_constants(n: int) -> tuple[int, int, int]:
    """Return ``(m_const, n_const, N_const)`` for dimension ``n``.

    ``m_const`` is the least integer >= 2 sqrt(n), ``n_const`` the least
    integer >= sqrt(n) - 1 and ``N_const`` their sum. Computed in integer
    arithmetic so perfect squares are exact.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidDimensionError(f"dimension must be an integer >= 2, got {n!r}")
    n = int(n)
    m_const = _ceil_sqrt(4 * n)
    n_const = _ceil_sqrt(n) - 1
    return m_const, n_const, m_const + n_const


@dataclass(frozen=True)
class GridParams:
    n: int
    eps: float
    side: float
    m_const: int
    n_const: int
    N_const: int

    @classmethod
    def build(cls, n: int, eps: float) -> "GridParams":
        m_const, n_const, N_const = derive_constants(n)
        eps = float(eps)
        if not math.isfinite(eps) or eps <= 0:
            raise ParameterError(f"eps must be a finite positive length, got {eps!r}")
        side = eps / (2.0 * math.sqrt(n))
        return cls(int(n), eps, side, m_const, n_const, N_const)


def cube_keys(points: np.ndarray, params: GridParams) -> np.ndarray:
    """Vectorised :func:`cube_key` for an ``(N, n)`` array."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != params.n:
        raise InvalidPointError(f"expected points of dimension {params.n}, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        bad = int(np.argmin(np.all(np.isfinite(pts), axis=1)))
        raise InvalidPointError(f"point {bad} has a non-finite coordinate")
    with np.errstate(over="ignore"):
        scaled = np.floor(pts / params.side)
    if scaled.size and np.max(np.abs(scaled)) >= _KEY_LIMIT:
        raise InvalidPointError("lattice index overflow; eps is too small for the coordinate range")
    return scaled.astype(np.int64)


def cube_key(p, params: GridParams) -> tuple[int, ...]:
    return tuple(int(j) for j in cube_keys(np.asarray(p, dtype=np.float64)[None, :], params)[0])


def offsets(n: int, radius: int, min_radius: int = 0) -> np.ndarray:
    """Integer offsets ``o`` with ``min_radius <= max|o_i| <= radius``, lexicographic."""
    rng = range(-radius, radius + 1)
    out = np.array(list(itertools.product(rng, repeat=n)), dtype=np.int64).reshape(-1, n)
    cheb = np.abs(out).max(axis=1) if len(out) else np.zeros(0, dtype=np.int64)
    return out[cheb >= min_radius]


def extension_keys(S, m: int) -> set[tuple[int, ...]]:
    """All keys within Chebyshev index distance ``m`` of ``S`` (``(2m+1)^n`` keys)."""
    if m < 0:
        raise ParameterError("extension radius must be non-negative")
    S = tuple(int(s) for s in S)
    return {tuple(s + o for s, o in zip(S, off)) for off in itertools.product(range(-m, m + 1), repeat=len(S))}


def adjacent(S, T) -> bool:
    return max(abs(int(a) - int(b)) for a, b in zip(S, T)) <= 1


def chebyshev(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(a) - np.asarray(b)).max(axis=-1)


def box_gap_exceeds(delta: np.ndarray, params: GridParams) -> np.ndarray:
    """True where two cells whose keys differ by ``delta`` cannot hold an eps-pair.

    Uses the lattice-box gap ``max(|delta_i| - 1, 0) * side`` per axis with a
    relative safety margin, so no pair within eps is ever excluded.
    """
    gap = np.maximum(np.abs(delta) - 1, 0).astype(np.float64) * params.side
    return np.einsum("...i,...i->...", gap, gap) > params.eps * params.eps * (1.0 + 1e-9)


@dataclass
class CubeMap:
    """Points of a subset of ``X`` grouped by the cube that contains them.

    ``keys`` holds the occupied cube keys in lexicographic order; the ids in
    cell ``c`` are ``ids_by_cell[starts[c]:starts[c + 1]]`` (ascending).
    ``ids`` is the sorted member id array and ``cell_of`` its aligned cell
    index.
    """

    params: GridParams
    keys: np.ndarray
    starts: np.ndarray
    ids_by_cell: np.ndarray
    ids: np.ndarray
    cell_of: np.ndarray
    _lo: np.ndarray | None = field(default=None, repr=False)
    _mult: np.ndarray | None = field(default=None, repr=False)
    _codes: np.ndarray | None = field(default=None, repr=False)
    _mult_span: np.ndarray | None = field(default=None, repr=False)
    _lookup: dict | None = field(default=None, repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.keys)

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.starts)

    def cell_ids(self, c: int) -> np.ndarray:
        return self.ids_by_cell[self.starts[c] : self.starts[c + 1]]

    def gather(self, cells) -> np.ndarray:
        """Concatenated ids of ``cells`` (negative entries ignored)."""
        cells = np.asarray(cells, dtype=np.int64).ravel()
        cells = cells[cells >= 0]
        if len(cells) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([self.ids_by_cell[self.starts[c] : self.starts[c + 1]] for c in cells])

    def cells_of_ids(self, ids) -> np.ndarray:
        pos = np.searchsorted(self.ids, ids)
        return self.cell_of[pos]

    @property
    def cells(self) -> dict[tuple[int, ...], list[int]]:
        return {tuple(int(v) for v in self.keys[c]): self.cell_ids(c).tolist() for c in range(self.n_cells)}

    def lookup(self, qkeys: np.ndarray) -> np.ndarray:
        """Cell index for each query key row, ``-1`` where the cube is empty."""
        qkeys = np.asarray(qkeys, dtype=np.int64)
        shape = qkeys.shape[:-1]
        flat = qkeys.reshape(-1, self.params.n)
        out = np.full(len(flat), -1, dtype=np.int64)
        if self.n_cells == 0 or len(flat) == 0:
            return out.reshape(shape)
        if self._codes is not None:
            rel = flat - self._lo
            span = self._mult_span
            ok = np.all((rel >= 0) & (rel < span), axis=1)
            codes = rel[ok] @ self._mult
            pos = np.searchsorted(self._codes, codes)
            pos = np.minimum(pos, len(self._codes) - 1)
            hit = self._codes[pos] == codes
            sub = np.full(len(codes), -1, dtype=np.int64)
            sub[hit] = pos[hit]
            out[ok] = sub
        else:
            table = self._lookup
            for i, row in enumerate(map(tuple, flat.tolist())):
                out[i] = table.get(row, -1)
        return out.reshape(shape)

    def neighbours(self, cells: np.ndarray, offs: np.ndarray) -> np.ndarray:
        """``(len(cells), len(offs))`` cell indices of ``key(c) + o`` (or -1)."""
        cells = np.asarray(cells, dtype=np.int64)
        q = self.keys[cells][:, None, :] + offs[None, :, :]
        return self.lookup(q)


def build_cube_map(points: np.ndarray, params: GridParams, ids=None) -> CubeMap:
    """Index ``points[ids]`` (all rows when ``ids`` is None) into cubes."""
    points = np.asarray(points, dtype=np.float64)
    if ids is None:
        ids = np.arange(len(points), dtype=np.int64)
    else:
        ids = np.unique(np.asarray(ids, dtype=np.int64))
    n = params.n
    if len(ids) == 0:
        empty = np.zeros((0, n), dtype=np.int64)
        cm = CubeMap(params, empty, np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64),
                     ids, np.zeros(0, dtype=np.int64))
        cm._codes = np.zeros(0, dtype=np.int64)
        cm._lo = np.zeros(n, dtype=np.int64)
        cm._mult = np.ones(n, dtype=np.int64)
        cm._mult_span = np.ones(n, dtype=np.int64)
        return cm
    keys = cube_keys(points[ids], params)
    lo = keys.min(axis=0)
    span = keys.max(axis=0) - lo + 1
    total = 1
    for s in span.tolist():
        total *= int(s)
    if total < _KEY_LIMIT:
        mult = np.ones(n, dtype=np.int64)
        for axis in range(n - 2, -1, -1):
            mult[axis] = mult[axis + 1] * span[axis + 1]
        codes = (keys - lo) @ mult
        ucodes, inverse = np.unique(codes, return_inverse=True)
        order = np.lexsort((ids, inverse))
        first = np.searchsorted(inverse[order], np.arange(len(ucodes)))
        cell_keys = keys[order][first]
        lookup = None
    else:
        cell_keys, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        order = np.lexsort((ids, inverse))
        ucodes = None
        lookup = {tuple(k): i for i, k in enumerate(cell_keys.tolist())}
    counts = np.bincount(inverse, minlength=len(cell_keys))
    starts = np.zeros(len(cell_keys) + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    cm = CubeMap(params, cell_keys.astype(np.int64), starts, ids[order], ids, inverse.astype(np.int64))
    cm._lookup = lookup
    if ucodes is not None:
        cm._lo, cm._mult, cm._codes = lo, mult, ucodes
        cm._mult_span = span
    return cm
