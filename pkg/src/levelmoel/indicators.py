"""Hypervolume, front coverage, and the pseudo-front used to normalise runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyReference, UnsupportedDimension

log = logging.getLogger(__name__)

NADIR = 1.1
DEFAULT_THETA = 0.1


def _nondominated_mask(F: np.ndarray) -> np.ndarray:
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    return ~(le & lt).any(axis=0)


def _hv2d(xy: list, rx: Fraction, ry: Fraction) -> Fraction:
    """Area dominated by ``xy`` (already strictly inside the reference box)."""
    area = Fraction(0)
    best_y = ry
    for x, y in sorted(xy):
        if y < best_y:
            area += (rx - x) * (best_y - y)
            best_y = y
    return area


def hypervolume_exact(points, nadir: Sequence[float] | float = NADIR) -> Fraction:
    """Exact rational hypervolume of float points, see :func:`hypervolume`."""
    P = np.asarray(points, dtype=np.float64)
    if P.size == 0:
        return Fraction(0)
    if P.ndim == 1:
        P = P[None, :]
    m = P.shape[1]
    if m > 3:
        raise UnsupportedDimension(f"hypervolume supports at most 3 objectives, got {m}")
    ref_f = np.broadcast_to(np.asarray(nadir, dtype=np.float64), (m,))
    P = P[np.all(P < ref_f, axis=1)]
    if len(P) == 0:
        return Fraction(0)
    P = P[_nondominated_mask(P)]
    ref = [Fraction(float(r)) for r in ref_f]
    pts = [tuple(Fraction(v) for v in row) for row in P.tolist()]
    if m == 1:
        return ref[0] - min(p[0] for p in pts)
    if m == 2:
        return _hv2d(pts, ref[0], ref[1])
    pts.sort(key=lambda p: p[2])
    z = [p[2] for p in pts] + [ref[2]]
    volume = Fraction(0)
    for i in range(len(pts)):
        depth = z[i + 1] - z[i]
        if depth > 0:
            volume += _hv2d([p[:2] for p in pts[: i + 1]], ref[0], ref[1]) * depth
    return volume


def hypervolume(points, nadir: Sequence[float] | float = NADIR) -> float:
    """Lebesgue measure of the union of boxes [p, nadir] (minimisation).

    Supports 1 to 3 objectives. Points outside the nadir box add nothing.
    Three objectives are handled by slicing along the last axis and summing
    2-D areas. The sum is carried out in rationals and rounded once, so adding
    a point can never lower the result.
    """
    return float(hypervolume_exact(points, nadir))


def hypervolume_mc(points, nadir, samples: int = 1_000_000, rng: np.random.Generator | None = None,
                   lower: Sequence[float] | float = 0.0, chunk: int = 200_000) -> float:
    """Monte Carlo estimate of :func:`hypervolume` over the box [lower, nadir]."""
    rng = rng or np.random.default_rng(0)
    P = np.asarray(points, dtype=np.float64)
    if P.size == 0:
        return 0.0
    m = P.shape[1]
    lo = np.broadcast_to(np.asarray(lower, dtype=np.float64), (m,))
    hi = np.broadcast_to(np.asarray(nadir, dtype=np.float64), (m,))
    hits = 0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        u = lo + rng.random((k, m)) * (hi - lo)
        covered = np.zeros(k, dtype=bool)
        for p in P:
            covered |= np.all(u >= p, axis=1)
        hits += int(covered.sum())
        done += k
    return float(np.prod(hi - lo) * hits / samples)


@dataclass(frozen=True)
class ReferenceFront:
    points: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def normalise(self, F) -> np.ndarray:
        return normalise(F, self.lower, self.upper)


def normalise(F, lower, upper) -> np.ndarray:
    """Affine map of each axis onto [0, 1] using the reference bounds.

    An axis with zero span is only shifted, so reference points land on 0.
    """
    F = np.asarray(F, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    span = np.asarray(upper, dtype=np.float64) - lower
    span = np.where(span > 0, span, 1.0)
    return (F - lower) / span


def build_pseudo_pf(history) -> ReferenceFront:
    """Non-dominated subset of every objective vector ever seen, normalised by its own bounds."""
    F = np.asarray(list(history) if not isinstance(history, np.ndarray) else history, dtype=np.float64)
    if F.size == 0:
        raise EmptyReference("no objective vectors to build a reference front from")
    if F.ndim == 1:
        F = F[None, :]
    F = np.unique(F, axis=0)
    front = F[_nondominated_mask(F)]
    lower = front.min(axis=0)
    upper = front.max(axis=0)
    for k in np.flatnonzero(upper <= lower):
        log.warning("objective %d is constant (%g) on the reference front; it normalises to 0", k, lower[k])
    return ReferenceFront(points=normalise(front, lower, upper), lower=lower, upper=upper)


def cpf(solutions, reference: ReferenceFront | np.ndarray, theta: float = DEFAULT_THETA) -> float:
    """Share of reference points lying within Chebyshev distance ``theta`` of some solution.

    Both sets must already be normalised with the same bounds. Callers pass
    the non-dominated subset of their solution set.
    """
    R = reference.points if isinstance(reference, ReferenceFront) else np.asarray(reference, dtype=np.float64)
    if R.size == 0:
        raise EmptyReference("reference front is empty")
    S = np.asarray(solutions, dtype=np.float64)
    if S.size == 0:
        return 0.0
    S = S.reshape(-1, R.shape[1])
    cheb = np.max(np.abs(R[:, None, :] - S[None, :, :]), axis=2)
    return float(np.mean(cheb.min(axis=1) <= theta))


def front_of(F) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if len(F) == 0:
        return F
    return F[_nondominated_mask(F)]


def population_hv(F, reference: ReferenceFront, nadir: float = NADIR) -> float:
    return hypervolume(reference.normalise(front_of(F)), nadir)


def population_cpf(F, reference: ReferenceFront, theta: float = DEFAULT_THETA) -> float:
    return cpf(reference.normalise(front_of(F)), reference, theta)


def hv_history(generations: Iterable[tuple[int, np.ndarray]], reference: ReferenceFront,
               nadir: float = NADIR) -> list[tuple[int, float]]:
    """HV of each generation's population (3 objectives, shared normalisation)."""
    return [(g, population_hv(F, reference, nadir)) for g, F in generations]
