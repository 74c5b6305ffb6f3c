"""Playability and diversity metrics for a generator's sampled levels.

``PD`` and ``CD`` are mean pairwise distances over the n(n-1)/2 unordered
pairs of samples. Summing over all ordered pairs with the same 2/(n(n-1))
prefactor would exactly double both values; the pair mean is used here and
only the scale differs between the two readings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyTrace, PatternSizeMismatch, TooFewSamples
from .levels import DEFAULT_PATTERN_SIZE, Level, PatternDistribution, TileVocabulary, extract_patterns
from .sim import Playtrace, SimResult, simulate

OBJECTIVE_NAMES = ("f_P", "f_PD", "f_CD")
PD_OFFSET = 200.0
PD_SCALE = 100.0


@dataclass(frozen=True)
class ObjectiveVector:
    """Minimised objectives; raw metric values kept alongside for logging."""

    f_P: float
    f_PD: float
    f_CD: float
    P: float = math.nan
    PD: float = math.nan
    CD: float = math.nan

    def as_array(self) -> np.ndarray:
        return np.array([self.f_P, self.f_PD, self.f_CD], dtype=np.float64)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.f_P, self.f_PD, self.f_CD))


def dtw(a: Playtrace | np.ndarray, b: Playtrace | np.ndarray) -> float:
    """Dynamic time warping cost with Euclidean local distance.

    Standard recursion D(i, j) = d(a_i, b_j) + min(D(i-1, j), D(i, j-1), D(i-1, j-1))
    with D(1, 1) = d(a_1, b_1); the value is D(|a|, |b|).
    """
    pa = a.points if isinstance(a, Playtrace) else np.asarray(a, dtype=np.float64).reshape(-1, 2)
    pb = b.points if isinstance(b, Playtrace) else np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if len(pa) == 0 or len(pb) == 0:
        raise EmptyTrace("dtw needs two non-empty traces")
    diff = pa[:, None, :] - pb[None, :, :]
    local = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).tolist()

    m = len(pb)
    inf = math.inf
    prev = [inf] * m
    row0 = local[0]
    acc = 0.0
    for j in range(m):
        acc += row0[j]
        prev[j] = acc
    for i in range(1, len(pa)):
        li = local[i]
        cur = [0.0] * m
        left = prev[0] + li[0]
        cur[0] = left
        for j in range(1, m):
            up = prev[j]
            diag = prev[j - 1]
            best = up if up < diag else diag
            if left < best:
                best = left
            left = best + li[j]
            cur[j] = left
        prev = cur
    return float(prev[-1])


def _as_probs(p: PatternDistribution | dict) -> tuple[int | None, dict]:
    if isinstance(p, PatternDistribution):
        return p.k, {key: c / p.total for key, c in p.counts.items()}
    return None, dict(p)


def tpjs(p: PatternDistribution | dict, q: PatternDistribution | dict) -> float:
    """Jensen-Shannon divergence (base 2) between two tile-pattern distributions.

    Accepts :class:`PatternDistribution` objects or plain ``{pattern: probability}``
    mappings. The result lies in [0, 1].
    """
    kp, pp = _as_probs(p)
    kq, qq = _as_probs(q)
    if kp is not None and kq is not None and kp != kq:
        raise PatternSizeMismatch(f"pattern sizes differ: {kp} vs {kq}")
    terms = []
    for key in pp.keys() | qq.keys():
        a = pp.get(key, 0.0)
        b = qq.get(key, 0.0)
        m = 0.5 * (a + b)
        x = a * math.log2(a / m) if a > 0.0 else 0.0
        y = b * math.log2(b / m) if b > 0.0 else 0.0
        terms.append(x + y)
    # per-key terms are symmetric and fsum is order independent, so tpjs(p, q) == tpjs(q, p) exactly
    js = 0.5 * math.fsum(terms)
    # rounding can leave tiny excursions outside [0, 1]
    return min(max(js, 0.0), 1.0)


def playability_P(levels: Sequence[Level], vocab: TileVocabulary, results: Sequence[SimResult] | None = None) -> float:
    if len(levels) < 1:
        raise TooFewSamples("playability needs at least one level")
    if results is None:
        results = [simulate(lv, vocab) for lv in levels]
    return sum(1 for r in results if r.completed) / len(results)


def _pair_mean(items, dist) -> float:
    n = len(items)
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    total = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            total += dist(items[i], items[j])
    return 2.0 * total / (n * (n - 1))


def player_diversity_PD(traces: Sequence[Playtrace]) -> float:
    return _pair_mean(list(traces), dtw)


def content_diversity_CD(levels: Sequence[Level], k: int = DEFAULT_PATTERN_SIZE) -> float:
    dists = [extract_patterns(lv, k) for lv in levels]
    return _pair_mean(dists, tpjs)


def transform(P: float, PD: float, CD: float, pd_offset: float = PD_OFFSET, pd_scale: float = PD_SCALE) -> ObjectiveVector:
    """Map raw metrics (bigger is better) to minimised objectives."""
    return ObjectiveVector(
        f_P=1.0 - P,
        f_PD=(pd_offset - PD) / pd_scale,
        f_CD=1.0 - CD,
        P=P,
        PD=PD,
        CD=CD,
    )


def objectives(
    levels: Sequence[Level],
    vocab: TileVocabulary,
    k: int = DEFAULT_PATTERN_SIZE,
    pd_offset: float = PD_OFFSET,
    pd_scale: float = PD_SCALE,
) -> ObjectiveVector:
    if len(levels) < 2:
        raise TooFewSamples(f"objectives need at least 2 levels, got {len(levels)}")
    results = [simulate(lv, vocab) for lv in levels]
    P = playability_P(levels, vocab, results)
    PD = player_diversity_PD([r.trace for r in results])
    CD = content_diversity_CD(levels, k)
    return transform(P, PD, CD, pd_offset, pd_scale)
