"""Online instance clustering shared by objects and locations.

An instance is the list of member features (unit vectors) assigned to it.
The similarity of a query feature to an instance is the mean cosine over its
members; because members and query are unit vectors this equals the dot
product with the member sum divided by the member count, which the registry
keeps incrementally.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .stream import normalize


def mean_feature(embeddings: Iterable[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of unit embeddings, renormalised to unit length."""
    embs = list(embeddings)
    if not embs:
        raise ValueError("mean_feature needs at least one embedding")
    return normalize(np.sum(embs, axis=0) / len(embs))


def instance_similarity(feature: np.ndarray, members: Sequence[np.ndarray]) -> float:
    """Mean cosine between ``feature`` and every member feature of one instance."""
    return float(np.mean([np.dot(feature, m) for m in members]))


class InstanceRegistry:
    """Dense, allocation-ordered instance ids ``0..N-1`` with member features."""

    def __init__(self, dim: int):
        self.dim = dim
        self.members: list[list[np.ndarray]] = []
        self._sums = np.zeros((0, dim))
        self._counts = np.zeros(0)

    def __len__(self) -> int:
        return len(self.members)

    def similarities(self, feature: np.ndarray) -> np.ndarray:
        if not self.members:
            return np.zeros(0)
        return (self._sums @ feature) / self._counts

    def best(self, feature: np.ndarray) -> tuple[int | None, float]:
        """Argmax instance and its score; ties go to the lowest id."""
        sims = self.similarities(feature)
        if len(sims) == 0:
            return None, float("-inf")
        idx = int(np.argmax(sims))
        return idx, float(sims[idx])

    def add(self, instance_id: int | None, feature: np.ndarray) -> int:
        """Append ``feature`` to ``instance_id``; ``None`` allocates a new instance."""
        feature = np.asarray(feature, dtype=np.float64)
        if instance_id is None:
            instance_id = len(self.members)
            self.members.append([])
            self._sums = np.vstack([self._sums, np.zeros(self.dim)])
            self._counts = np.append(self._counts, 0.0)
        elif not 0 <= instance_id < len(self.members):
            raise IndexError(f"unknown instance {instance_id}")
        self.members[instance_id].append(feature)
        self._sums[instance_id] += feature
        self._counts[instance_id] += 1
        return instance_id

    def assign(self, feature: np.ndarray, threshold: float) -> int:
        """Join the best instance if its score reaches ``threshold``, else start one."""
        best_id, best_sim = self.best(feature)
        return self.add(best_id if best_id is not None and best_sim >= threshold else None, feature)

    @classmethod
    def from_members(cls, dim: int, members: Sequence[Sequence[np.ndarray]]) -> "InstanceRegistry":
        reg = cls(dim)
        for group in members:
            iid = None
            for f in group:
                iid = reg.add(iid, f)
            if iid is None:
                raise ValueError("instances must have at least one member")
        return reg
