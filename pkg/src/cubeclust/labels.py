"""Cluster labelings of point id sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE = -1


@dataclass(frozen=True, eq=False)
class Labeling:
    """``labels[i]`` is the cluster of ``ids[i]``, or ``NOISE``.

    Cluster ids run from 0 in order of each cluster's smallest member id,
    so two labelings of the same partition are array-equal.
    """

    ids: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_raw(cls, ids, raw) -> "Labeling":
        """Canonicalise arbitrary integer cluster tags (negative = noise)."""
        ids = np.asarray(ids, dtype=np.int64)
        raw = np.asarray(raw, dtype=np.int64)
        order = np.argsort(ids, kind="stable")
        ids, raw = ids[order], raw[order]
        labels = np.full(len(ids), NOISE, dtype=np.int64)
        member = raw >= 0
        if member.any():
            tags = raw[member]
            _, first = np.unique(tags, return_index=True)
            # ids are sorted, so the first occurrence of a tag is its smallest member
            rank = np.empty(len(first), dtype=np.int64)
            rank[np.argsort(first, kind="stable")] = np.arange(len(first))
            _, inv = np.unique(tags, return_inverse=True)
            labels[member] = rank[inv.ravel()]
        return cls(ids, labels)

    @classmethod
    def all_noise(cls, ids) -> "Labeling":
        ids = np.sort(np.asarray(ids, dtype=np.int64))
        return cls(ids, np.full(len(ids), NOISE, dtype=np.int64))

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) and self.labels.max() >= 0 else 0

    @property
    def noise_ids(self) -> np.ndarray:
        return self.ids[self.labels == NOISE]

    @property
    def member_ids(self) -> np.ndarray:
        return self.ids[self.labels != NOISE]

    def clusters(self) -> list[np.ndarray]:
        return [self.ids[self.labels == c] for c in range(self.n_clusters)]

    def cluster_sizes(self) -> np.ndarray:
        member = self.labels[self.labels >= 0]
        return np.bincount(member, minlength=self.n_clusters)

    def label_of(self, ids) -> np.ndarray:
        return self.labels[np.searchsorted(self.ids, ids)]

    def same_partition(self, other: "Labeling") -> bool:
        return np.array_equal(self.ids, other.ids) and np.array_equal(self.labels, other.labels)

    def first_difference(self, other: "Labeling"):
        """Smallest id labelled differently (or present in only one), else None."""
        if not np.array_equal(self.ids, other.ids):
            diff = np.setxor1d(self.ids, other.ids)
            return int(diff[0])
        bad = np.flatnonzero(self.labels != other.labels)
        return int(self.ids[bad[0]]) if len(bad) else None
