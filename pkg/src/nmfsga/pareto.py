"""Nondominated sorting, crowding distance and crowded-comparison selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(eq=False)
class Individual:
    mask: np.ndarray
    f1: float = math.inf
    f2: int = 0
    rank: int = -1
    crowding: float = 0.0

    @property
    def objectives(self) -> tuple[float, int]:
        return (self.f1, self.f2)

    @property
    def key(self) -> bytes:
        return np.packbits(self.mask).tobytes() + self.mask.size.to_bytes(4, "little")

    def copy(self) -> "Individual":
        return Individual(self.mask.copy(), self.f1, self.f2, self.rank, self.crowding)

    def to_dict(self) -> dict:
        return {
            "mask": "".join("1" if b else "0" for b in self.mask),
            "f1": self.f1,
            "f2": self.f2,
            "rank": self.rank,
            "crowding": self.crowding,
        }


def dominates(a, b) -> bool:
    """Minimisation dominance: no worse everywhere, strictly better somewhere."""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def fast_nondominated_sort(objectives) -> list[np.ndarray]:
    """Partition row indices of an ``n x m`` objective matrix into fronts."""
    objs = np.asarray(objectives, dtype=np.float64)
    if objs.shape[0] == 0:
        return []
    ranks = kernels.nondominated_ranks(objs)
    return [np.flatnonzero(ranks == r) for r in range(int(ranks.max()) + 1)]


def crowding_distance(objectives) -> np.ndarray:
    """Deb's crowding distance of every member of one front."""
    objs = np.asarray(objectives, dtype=np.float64)
    n, m = objs.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for j in range(m):
        order = np.argsort(objs[:, j], kind="stable")
        col = objs[order, j]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = col[-1] - col[0]
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def assign_rank_and_crowding(pop: list[Individual]) -> list[np.ndarray]:
    objs = np.array([ind.objectives for ind in pop], dtype=float)
    fronts = fast_nondominated_sort(objs)
    for r, front in enumerate(fronts):
        dist = crowding_distance(objs[front])
        for i, d in zip(front, dist):
            pop[i].rank = r
            pop[i].crowding = float(d)
    return fronts


def crowded_order(pop: list[Individual]) -> list[int]:
    """Indices best-first: rank, then crowding (larger first), then f1, f2."""
    return sorted(range(len(pop)), key=lambda i: (pop[i].rank, -pop[i].crowding, pop[i].f1, pop[i].f2))


def tournament_select(pop: list[Individual], rng: np.random.Generator) -> Individual:
    """Binary tournament on (rank, crowding); full ties go to the first drawn."""
    i, j = rng.integers(0, len(pop), 2)
    a, b = pop[i], pop[j]
    if b.rank < a.rank or (b.rank == a.rank and b.crowding > a.crowding):
        return b
    return a


def environmental_selection(pool: list[Individual], size: int) -> list[Individual]:
    """NSGA-II survivor selection of ``size`` members from ``pool``.

    Distinct masks are preferred; duplicates only fill slots the distinct
    members cannot. Survivors are re-ranked among themselves.
    """
    seen: set[bytes] = set()
    unique, dupes = [], []
    for ind in pool:
        (dupes if ind.key in seen else unique).append(ind)
        seen.add(ind.key)
    chosen: list[Individual] = []
    for group in (unique, dupes):
        if len(chosen) >= size or not group:
            continue
        fronts = assign_rank_and_crowding(group)
        for front in fronts:
            members = [group[i] for i in front]
            room = size - len(chosen)
            if len(members) <= room:
                chosen.extend(members)
            else:
                members.sort(key=lambda ind: (-ind.crowding, ind.f1, ind.f2))
                chosen.extend(members[:room])
            if len(chosen) >= size:
                break
    survivors = [ind.copy() for ind in chosen]
    assign_rank_and_crowding(survivors)
    return survivors
