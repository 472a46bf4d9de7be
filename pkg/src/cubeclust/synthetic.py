"""Seeded synthetic point clouds for tests, benchmarks and the CLI ``generate`` command."""

from __future__ import annotations

import numpy as np


def blobs(n_points: int, dim: int = 2, centers: int = 3, spread: float = 1.0, box: float = 10.0, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    mids = rng.uniform(0, box, size=(centers, dim))
    which = rng.integers(0, centers, size=n_points)
    return mids[which] + rng.normal(scale=spread, size=(n_points, dim))


def uniform(n_points: int, dim: int = 2, box: float = 1.0, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(0, box, size=(n_points, dim))


def towns(n_points: int, n_towns: int = 3, sprawl: float = 0.3, extent: float = 100_000.0, seed: int = 0) -> np.ndarray:
    """Planar settlement-like data: dense Gaussian towns over uniform rural sprawl.

    ``sprawl`` is the fraction of points spread uniformly over the square of
    side ``extent`` (metres); town sizes and radii vary.
    """
    rng = np.random.default_rng(seed)
    n_rural = int(round(n_points * sprawl))
    n_town = n_points - n_rural
    weights = rng.uniform(0.5, 1.5, size=n_towns)
    per_town = rng.multinomial(n_town, weights / weights.sum())
    parts = [rng.uniform(0, extent, size=(n_rural, 2))]
    for size in per_town:
        centre = rng.uniform(0.15 * extent, 0.85 * extent, size=2)
        radius = rng.uniform(0.01, 0.04) * extent
        parts.append(centre + rng.normal(scale=radius, size=(size, 2)))
    pts = np.concatenate(parts)
    return pts[rng.permutation(len(pts))]


GENERATORS = {"blobs": blobs, "uniform": uniform, "towns": towns}
