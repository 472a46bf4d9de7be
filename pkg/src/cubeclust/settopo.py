"""Interior, boundary and closure of finite point sets relative to the cube lattice.

A cube ``S`` holding points of ``A`` is an interior cube when every one of the
``3^n`` cubes of its 1-extension holds points of ``A`` and no point of
``X \\ A``. Empty neighbouring cubes disqualify interiority (the
conservative reading); ``strict=False`` selects the permissive reading
where empty neighbours are ignored, kept only for comparison.

Most callers work with many disjoint regions at once (one per cluster), so
the core routines take a per-point region label over a base :class:`CubeMap`
and operate on ``(cell, region)`` pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import CubeMap, offsets

INTERIOR, BOUNDARY, CLOSURE = "interior", "boundary", "closure"


@dataclass
class RegionPairs:
    """Occupancy of each ``(cell, region)`` pair of a labelled point set.

    ``cell``, ``region`` and ``count`` are aligned and sorted by
    ``(cell, region)``; ``interior`` flags interior cubes of each region.
    """

    base: CubeMap
    cell: np.ndarray
    region: np.ndarray
    count: np.ndarray
    interior: np.ndarray
    n_regions: int

    def codes(self, cell, region) -> np.ndarray:
        return np.asarray(cell, dtype=np.int64) * self.n_regions + np.asarray(region, dtype=np.int64)

    def find(self, cell, region) -> np.ndarray:
        """Pair index for each query, ``-1`` when the region has no point there."""
        own = self.codes(self.cell, self.region)
        q = self.codes(cell, region)
        out = np.full(q.shape, -1, dtype=np.int64)
        if len(own) == 0:
            return out
        pos = np.minimum(np.searchsorted(own, q), len(own) - 1)
        hit = (own[pos] == q) & (np.asarray(cell) >= 0)
        out[hit] = pos[hit]
        return out

    def extension_pairs(self, pair_mask: np.ndarray, N: int) -> np.ndarray:
        """Boolean mask of pairs ``(T, r)`` with ``T`` within ``N`` of a masked pair ``(S, r)``."""
        out = np.zeros(len(self.cell), dtype=bool)
        src = np.flatnonzero(pair_mask)
        if len(src) == 0:
            return out
        offs = offsets(self.base.params.n, N)
        chunk = max(1, (1 << 20) // len(offs))
        for start in range(0, len(src), chunk):
            sel = src[start : start + chunk]
            nb = self.base.neighbours(self.cell[sel], offs)
            reg = np.broadcast_to(self.region[sel][:, None], nb.shape)
            hit = self.find(nb.ravel(), reg.ravel())
            out[hit[hit >= 0]] = True
        return out

    def extension_cells(self, pair_mask: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray]:
        """All ``(cell, region)`` combos (any occupancy) within ``N`` of masked pairs.

        Returns cell indices of the base map, so empty lattice cubes are
        dropped; cubes with no base points hold no ids either way.
        """
        src = np.flatnonzero(pair_mask)
        if len(src) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        offs = offsets(self.base.params.n, N)
        nb = self.base.neighbours(self.cell[src], offs)
        reg = np.broadcast_to(self.region[src][:, None], nb.shape)
        ok = nb >= 0
        combo = np.unique(nb[ok] * self.n_regions + reg[ok])
        return combo // self.n_regions, combo % self.n_regions


def region_pairs(base: CubeMap, point_region: np.ndarray, strict: bool = True) -> RegionPairs:
    """Classify every ``(cell, region)`` pair as interior or boundary.

    ``point_region`` is aligned with ``base.ids``; negative entries mark
    points outside every region.
    """
    point_region = np.asarray(point_region, dtype=np.int64)
    inside = point_region >= 0
    n_regions = int(point_region.max()) + 1 if inside.any() else 1
    codes = base.cell_of[inside] * n_regions + point_region[inside]
    ucodes, count = np.unique(codes, return_counts=True)
    cell = ucodes // n_regions
    region = ucodes % n_regions
    pairs = RegionPairs(base, cell, region, count, np.zeros(len(cell), dtype=bool), n_regions)
    if len(cell) == 0:
        return pairs
    offs = offsets(base.params.n, 1)
    x_counts = base.counts
    interior = np.ones(len(cell), dtype=bool)
    chunk = max(1, (1 << 20) // len(offs))
    for start in range(0, len(cell), chunk):
        sl = slice(start, start + chunk)
        nb = base.neighbours(cell[sl], offs)
        reg = np.broadcast_to(region[sl][:, None], nb.shape)
        hit = pairs.find(nb.ravel(), reg.ravel()).reshape(nb.shape)
        present = nb >= 0
        a_count = np.where(hit >= 0, count[np.maximum(hit, 0)], 0)
        full = present & (hit >= 0) & (a_count == x_counts[np.maximum(nb, 0)])
        if strict:
            interior[sl] = full.all(axis=1)
        else:
            interior[sl] = (full | ~present).all(axis=1)
    pairs.interior = interior
    return pairs


def boundary_extension_members(pairs: RegionPairs, point_region: np.ndarray, N: int) -> np.ndarray:
    """Mask over ``base.ids``: points of region ``r`` lying in ``(boundary of r)^N``."""
    mark = pairs.extension_pairs(~pairs.interior, N)
    point_region = np.asarray(point_region, dtype=np.int64)
    out = np.zeros(len(point_region), dtype=bool)
    inside = np.flatnonzero(point_region >= 0)
    if len(inside) == 0:
        return out
    idx = pairs.find(pairs.base.cell_of[inside], point_region[inside])
    out[inside] = mark[idx]
    return out


@dataclass
class RegionView:
    """One subset ``A`` of the indexed set, with its interior/boundary cubes."""

    base: CubeMap
    member_ids: np.ndarray
    cells: np.ndarray
    interior_mask: np.ndarray
    strict: bool = True
    _pairs: RegionPairs | None = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def interior_cells(self) -> np.ndarray:
        return self.cells[self.interior_mask]

    @property
    def boundary_cells(self) -> np.ndarray:
        return self.cells[~self.interior_mask]

    def _keyset(self, cells) -> set[tuple[int, ...]]:
        return {tuple(int(v) for v in self.base.keys[c]) for c in cells}

    @property
    def keys(self) -> set[tuple[int, ...]]:
        return self._keyset(self.cells)

    @property
    def interior_keys(self) -> set[tuple[int, ...]]:
        return self._keyset(self.interior_cells)

    @property
    def boundary_keys(self) -> set[tuple[int, ...]]:
        return self._keyset(self.boundary_cells)

    def restrict(self, part: str = BOUNDARY, N: int = 0, within: str | np.ndarray = "region") -> np.ndarray:
        """Ids in the ``N``-extension of ``part``, filtered to ``within``.

        ``within`` is ``"region"`` (ids of ``A``), ``"all"`` (ids of the
        base set) or an explicit id array. So ``restrict("boundary", 2,
        "region")`` is the ``A``-part of the 2-extended boundary.
        """
        scope = within if isinstance(within, str) else "all"
        key = (part, N, scope)
        if key not in self._cache:
            src = {INTERIOR: self.interior_cells, BOUNDARY: self.boundary_cells, CLOSURE: self.cells}[part]
            cells, _ = extend_region(src, N, self.base)
            ids = self.base.gather(cells)
            ids.sort()
            if scope == "region":
                ids = ids[np.isin(ids, self.member_ids)]
            self._cache[key] = ids
        ids = self._cache[key]
        if not isinstance(within, str):
            ids = ids[np.isin(ids, np.asarray(within))]
        return ids


def classify_cubes(A, base: CubeMap, strict: bool = True) -> RegionView:
    members = np.unique(np.asarray(A, dtype=np.int64))
    point_region = np.where(np.isin(base.ids, members), 0, -1)
    pairs = region_pairs(base, point_region, strict=strict)
    return RegionView(base, members, pairs.cell, pairs.interior, strict, pairs)


def extend_region(cells, N: int, base: CubeMap) -> tuple[np.ndarray, np.ndarray]:
    """Occupied base cells within ``N`` of ``cells`` and the ids they hold."""
    if N < 0:
        raise ValueError("extension radius must be non-negative")
    cells = np.unique(np.asarray(cells, dtype=np.int64))
    if len(cells) == 0:
        return cells, np.zeros(0, dtype=np.int64)
    offs = offsets(base.params.n, N)
    parts = []
    chunk = max(1, (1 << 20) // len(offs))
    for start in range(0, len(cells), chunk):
        nb = base.neighbours(cells[start : start + chunk], offs)
        parts.append(nb[nb >= 0])
    out = np.unique(np.concatenate(parts))
    ids = base.gather(out)
    ids.sort()
    return out, ids


def extend_keys(keys, N: int) -> set[tuple[int, ...]]:
    """Lattice keys (occupied or not) within ``N`` of ``keys``."""
    keys = list(keys)
    if not keys:
        return set()
    arr = np.array(keys, dtype=np.int64)
    offs = offsets(arr.shape[1], N)
    allk = (arr[:, None, :] + offs[None, :, :]).reshape(-1, arr.shape[1])
    return set(map(tuple, np.unique(allk, axis=0).tolist()))
