"""Pareto dominance, non-dominated sorting and survival selection."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import PointBeyondNadir, PoolTooSmall
from .indicators import hypervolume_exact

# objective columns (f_P, f_PD, f_CD) used by each optimisation mode
MODE_OBJECTIVES = {
    "P": (0,),
    "P+PD": (0, 1),
    "P+CD": (0, 2),
    "P+PD+CD": (0, 1, 2),
}


def active_columns(mode: str) -> tuple[int, ...]:
    try:
        return MODE_OBJECTIVES[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(MODE_OBJECTIVES)}") from None


def dominates(a, b, mode: str | Sequence[int] | None = None) -> bool:
    """True iff ``a`` is no worse than ``b`` on every active objective and better on one."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if mode is not None:
        cols = active_columns(mode) if isinstance(mode, str) else tuple(mode)
        a, b = a[list(cols)], b[list(cols)]
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_matrix(F: np.ndarray) -> np.ndarray:
    """dom[i, j] is True when row i dominates row j."""
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    return le & lt


def nondominated_sort(F: np.ndarray) -> list[list[int]]:
    """Fast non-dominated sorting; returns fronts of row indices, best first."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    n = len(F)
    if n == 0:
        return []
    dom = dominance_matrix(F)
    dominated_count = dom.sum(axis=0)
    dominates_list = [np.flatnonzero(dom[i]).tolist() for i in range(n)]
    fronts = []
    current = [i for i in range(n) if dominated_count[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in dominates_list[i]:
                dominated_count[j] -= 1
                if dominated_count[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
    return fronts


def nondominated_indices(F: np.ndarray) -> list[int]:
    F = np.asarray(F, dtype=np.float64)
    if len(F) == 0:
        return []
    dom = dominance_matrix(F)
    return np.flatnonzero(~dom.any(axis=0)).tolist()


def sde_distances(F: np.ndarray) -> np.ndarray:
    """Shifted distances: out[p, q] = || max(F[q] - F[p], 0) ||.

    Every peer q is first moved to max(q, p) componentwise, so only the
    objectives where q is worse than p contribute. Diagonal is +inf.
    """
    diff = np.maximum(F[None, :, :] - F[:, None, :], 0.0)
    d = np.sqrt(np.einsum("pqk,pqk->pq", diff, diff))
    np.fill_diagonal(d, np.inf)
    return d


def sde_truncate(F: np.ndarray, keep: int) -> list[int]:
    """Drop the most crowded point (smallest SDE distance) until ``keep`` rows remain.

    Densities are recomputed after each removal; ties remove the lower index.
    Returns the surviving row indices in ascending order.
    """
    n = len(F)
    if keep >= n:
        return list(range(n))
    d = sde_distances(F)
    alive = np.ones(n, dtype=bool)
    for _ in range(n - keep):
        sub = d[np.ix_(alive, alive)]
        density = sub.min(axis=1)
        idx = np.flatnonzero(alive)
        # argmin returns the first minimum, i.e. the lower original index
        alive[idx[int(np.argmin(density))]] = False
    return np.flatnonzero(alive).tolist()


def _normalise_pool(F: np.ndarray) -> np.ndarray:
    lo = F.min(axis=0)
    span = F.max(axis=0) - lo
    span[span <= 0] = 1.0
    return (F - lo) / span


def sde_survival_select(F: np.ndarray, lam: int, born: Sequence[int] | None = None) -> list[int]:
    """Choose ``lam`` rows of the objective matrix ``F`` (active objectives only).

    Multi-objective: fill by front rank; the front that overflows is cut by
    SDE truncation on pool-normalised objectives. Single objective: plain
    sort by value, then older birth generation, then index.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    n = len(F)
    if n < lam:
        raise PoolTooSmall(f"pool of {n} cannot supply {lam} survivors")
    if n == lam:
        return list(range(n))
    if F.shape[1] == 1:
        ages = np.zeros(n) if born is None else np.asarray(born)
        order = sorted(range(n), key=lambda i: (F[i, 0], ages[i], i))
        return sorted(order[:lam])
    chosen: list[int] = []
    Fn = _normalise_pool(F)
    for front in nondominated_sort(F):
        room = lam - len(chosen)
        if room <= 0:
            break
        if len(front) <= room:
            chosen.extend(front)
            continue
        front = sorted(front)
        kept = sde_truncate(Fn[front], room)
        chosen.extend(front[i] for i in kept)
    return sorted(chosen)


def select_members(pool: Sequence, lam: int, mode: str) -> list:
    """Survival selection over population members carrying ``objectives``."""
    if any(m.objectives is None for m in pool):
        raise ValueError("every pool member must be evaluated before selection")
    cols = list(active_columns(mode))
    F = np.array([m.objectives.as_array()[cols] for m in pool])
    born = [m.generation for m in pool]
    return [pool[i] for i in sde_survival_select(F, lam, born)]


def hv_contributions(points: np.ndarray, nadir: Sequence[float]) -> np.ndarray:
    """Exclusive hypervolume of each point: HV(all) - HV(all without it)."""
    P = np.asarray(points, dtype=np.float64)
    total = hypervolume_exact(P, nadir)
    return np.array([float(total - hypervolume_exact(np.delete(P, i, axis=0), nadir)) for i in range(len(P))])


def knee_point(points: np.ndarray, nadir: Sequence[float]) -> int:
    """Index of the point with the largest exclusive hypervolume (ties: lowest index)."""
    P = np.asarray(points, dtype=np.float64)
    if len(P) == 0:
        raise ValueError("knee point of an empty front")
    if np.any(P > np.asarray(nadir, dtype=np.float64)):
        raise PointBeyondNadir("every front point must lie within the nadir box")
    return int(np.argmax(hv_contributions(P, nadir)))
