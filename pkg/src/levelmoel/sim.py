"""Deterministic grid platformer and a search agent that plays it.

The agent occupies one tile. It stands on a tile whose lower neighbour is
solid or a jump-through platform, and moves by

* walking/stepping off a ledge: 1 or 2 columns sideways, then dropping
  straight down until it lands;
* jumping: rising 1-4 rows, drifting 0-4 columns at the apex, then
  dropping until it lands.

Every swept tile must be passable; hazards kill, falling out of the bottom
row kills. The agent runs A* over standing positions with step count as
cost and remaining columns as heuristic, so the returned playtrace is the
shortest route (in swept tiles) to the last column.
"""

from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .levels import Category, Level, TileVocabulary

MAX_JUMP_HEIGHT = 4
MAX_JUMP_CARRY = 4
MAX_FALL_CARRY = 2
# Chebyshev bound on consecutive trace points. Traces record every swept
# tile so the realised step is 1; this is the bound callers may rely on.
MAX_STEP_DISPLACEMENT = 5

_PASSABLE = {Category.EMPTY, Category.COIN, Category.PLATFORM}
_SUPPORT = {Category.SOLID, Category.BREAKABLE, Category.QUESTION_BOX, Category.PIPE_BODY, Category.PLATFORM}


@dataclass(frozen=True, eq=False)
class Playtrace:
    """Agent positions as (x=column, y=row) pairs, one per step."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("a playtrace needs at least one point")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, Playtrace):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.array_equal(self.points, other.points))

    __hash__ = None

    def cells(self) -> list[tuple[int, int]]:
        """Trace as integer (column, row) tiles."""
        return [(int(x), int(y)) for x, y in self.points]


@dataclass(frozen=True, eq=False)
class SimResult:
    completed: bool
    trace: Playtrace
    progress: int

    def __eq__(self, other):
        if not isinstance(other, SimResult):
            return NotImplemented
        return (self.completed, self.progress) == (other.completed, other.progress) and self.trace == other.trace

    __hash__ = None


def _physics_tables(vocab: TileVocabulary) -> tuple[tuple[bool, ...], tuple[bool, ...]]:
    cats = vocab.categories
    return tuple(c in _PASSABLE for c in cats), tuple(c in _SUPPORT for c in cats)


class _Grid:
    __slots__ = ("h", "w", "free", "support")

    def __init__(self, cells: np.ndarray, passable, support):
        self.h, self.w = cells.shape
        pas = np.asarray(passable, dtype=bool)[cells]
        sup = np.asarray(support, dtype=bool)[cells]
        # free[c][r]: agent may occupy tile; support[c][r]: tile holds up the one above
        self.free = pas.T.tolist()
        self.support = sup.T.tolist()

    def supported(self, c: int, r: int) -> bool:
        return r + 1 < self.h and self.support[c][r + 1]

    def drop(self, c: int, r: int, path: list) -> bool:
        """Fall from free tile (c, r) until supported, appending tiles to path."""
        col_free = self.free[c]
        col_sup = self.support[c]
        h = self.h
        while True:
            if r + 1 >= h:
                return False
            if col_sup[r + 1]:
                return True
            if not col_free[r + 1]:
                return False  # hazard underneath
            r += 1
            path.append((c, r))

    def moves(self, c: int, r: int):
        """Yield (landing, swept_path) for every legal move from standing tile (c, r)."""
        free = self.free
        w = self.w
        for d in (1, -1):
            # step sideways 1..2 tiles at the current height, then drop
            path = []
            for k in range(1, MAX_FALL_CARRY + 1):
                cc = c + d * k
                if not (0 <= cc < w) or not free[cc][r]:
                    break
                path.append((cc, r))
                seg = list(path)
                if self.drop(cc, r, seg):
                    yield seg[-1], seg
        # jumps: rise, drift at apex, drop
        rise = []
        for h in range(1, MAX_JUMP_HEIGHT + 1):
            rr = r - h
            if rr < 0 or not free[c][rr]:
                break
            rise.append((c, rr))
            seg = list(rise)
            if self.drop(c, rr, seg) and seg[-1] != (c, r):
                yield seg[-1], seg
            for d in (1, -1):
                drift = list(rise)
                for dx in range(1, MAX_JUMP_CARRY + 1):
                    cc = c + d * dx
                    if not (0 <= cc < w) or not free[cc][rr]:
                        break
                    drift.append((cc, rr))
                    seg = list(drift)
                    if self.drop(cc, rr, seg):
                        yield seg[-1], seg


def _spawn(grid: _Grid, column_cells, passable) -> tuple[int, int] | None:
    """Drop the agent in from the top of column 0; None if it dies or never lands."""
    start = None
    for r, v in enumerate(column_cells):
        if passable[v]:
            start = r
            break
        if not grid.support[0][r]:
            return None  # first non-solid tile from the top is a hazard
    if start is None:
        return None
    path = [(0, start)]
    if not grid.drop(0, start, path):
        return None
    return path[-1]


def _search(cells: np.ndarray, passable, support) -> tuple[bool, tuple, int]:
    grid = _Grid(cells, passable, support)
    h, w = grid.h, grid.w
    spawn = _spawn(grid, cells[:, 0].tolist(), passable)
    if spawn is None:
        rows = [r for r in range(h) if passable[cells[r, 0]]]
        fallback = (0, rows[-1] if rows else 0)
        return False, (fallback,), 0

    goal_col = w - 1
    best_g = {spawn: 0}
    parent: dict = {spawn: None}
    order = 0
    heap = [(goal_col - spawn[0], spawn[1], order, spawn)]
    closed: dict = {}
    goal = None
    while heap:
        f, _, ordno, state = heapq.heappop(heap)
        if state in closed:
            continue
        g = best_g[state]
        closed[state] = (g, ordno)
        if state[0] == goal_col:
            goal = state
            break
        for landing, seg in grid.moves(*state):
            if landing in closed:
                continue
            ng = g + len(seg)
            old = best_g.get(landing)
            if old is None or ng < old:
                best_g[landing] = ng
                parent[landing] = (state, seg)
                order += 1
                heapq.heappush(heap, (ng + goal_col - landing[0], landing[1], order, landing))

    if goal is None:
        # furthest column, then shortest path, then higher tile, then earliest expansion
        goal = min(closed, key=lambda s: (-s[0], closed[s][0], s[1], closed[s][1]))
    segments = []
    node = goal
    while parent[node] is not None:
        prev, seg = parent[node]
        segments.append(seg)
        node = prev
    path = [spawn]
    for seg in reversed(segments):
        path.extend(seg)
    return goal[0] == goal_col, tuple(path), goal[0]


@lru_cache(maxsize=65536)
def _simulate_cached(key: bytes, shape: tuple[int, int], passable, support):
    cells = np.frombuffer(key[4:], dtype=np.int16).reshape(shape)
    completed, path, progress = _search(cells, passable, support)
    return completed, path, progress


def simulate(level: Level, vocab: TileVocabulary) -> SimResult:
    """Play ``level`` with the search agent. Pure and deterministic."""
    if int(level.cells.max()) >= vocab.size:
        raise ValueError("level uses tile indices outside the vocabulary")
    passable, support = _physics_tables(vocab)
    completed, path, progress = _simulate_cached(level.key(), level.shape, passable, support)
    return SimResult(completed=completed, trace=Playtrace(np.array(path, dtype=np.float64)), progress=progress)


def is_playable(level: Level, vocab: TileVocabulary) -> bool:
    return simulate(level, vocab).completed


def render_trace(level: Level, vocab: TileVocabulary, trace: Playtrace, mark: str = "x") -> str:
    """Level text with every trace tile overwritten by ``mark``."""
    rows = [[vocab.symbols[v] for v in row] for row in level.cells.tolist()]
    for c, r in trace.cells():
        rows[r][c] = mark
    return "\n".join("".join(row) for row in rows)


def trace_csv(trace: Playtrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "x", "y"])
    for i, (x, y) in enumerate(trace.points.tolist()):
        writer.writerow([i, repr(x), repr(y)])
    return buf.getvalue()
