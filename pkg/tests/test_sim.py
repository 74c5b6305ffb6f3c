import heapq

import numpy as np
import pytest

from levelmoel.levels import Category, Level, TileVocabulary
from levelmoel.sim import _simulate_cached, MAX_STEP_DISPLACEMENT, Playtrace, is_playable, render_trace, simulate, trace_csv

from conftest import flat_level, grid

PASS = {Category.EMPTY, Category.COIN, Category.PLATFORM}
SUPPORT = {Category.SOLID, Category.BREAKABLE, Category.QUESTION_BOX, Category.PIPE_BODY, Category.PLATFORM}


class Oracle:
    """Independent restatement of the movement rules with Dijkstra over swept-tile cost."""

    def __init__(self, level: Level, vocab: TileVocabulary):
        cats = vocab.categories
        self.h, self.w = level.shape
        self.free = {(c, r) for r in range(self.h) for c in range(self.w) if cats[level.cells[r, c]] in PASS}
        self.sup = {(c, r) for r in range(self.h) for c in range(self.w) if cats[level.cells[r, c]] in SUPPORT}
        self.level = level
        self.cats = cats

    def fall(self, c, r):
        steps = 0
        while True:
            if (c, r + 1) in self.sup:
                return (c, r), steps
            if (c, r + 1) not in self.free:
                return None, steps  # hazard or bottom edge
            r += 1
            steps += 1

    def neighbours(self, c, r):
        out = []
        for d in (1, -1):
            for k in (1, 2):
                if all((c + d * i, r) in self.free for i in range(1, k + 1)):
                    land, n = self.fall(c + d * k, r)
                    if land:
                        out.append((land, k + n))
        for h in range(1, 5):
            if not all((c, r - i) in self.free for i in range(1, h + 1)):
                break
            for d in (1, -1):
                for dx in range(0, 5):
                    if dx and not all((c + d * i, r - h) in self.free for i in range(1, dx + 1)):
                        break
                    land, n = self.fall(c + d * dx, r - h)
                    if land and land != (c, r):
                        out.append((land, h + dx + n))
        return out

    def spawn(self):
        col = [self.cats[v] for v in self.level.cells[:, 0]]
        for r, cat in enumerate(col):
            if cat in PASS:
                land, _ = self.fall(0, r)
                return land
            if cat not in SUPPORT:
                return None
        return None

    def distances(self):
        s = self.spawn()
        if s is None:
            return {}
        dist = {s: 0}
        heap = [(0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for v, cost in self.neighbours(*u):
                if d + cost < dist.get(v, 1 << 30):
                    dist[v] = d + cost
                    heapq.heappush(heap, (d + cost, v))
        return dist


def random_platform_level(rng, h=10, w=16, vocab=None):
    vocab = vocab or TileVocabulary.default()
    cells = np.full((h, w), vocab.index("-"), dtype=np.int16)
    cells[-1, :] = vocab.index("X")
    for c in range(w):
        if rng.random() < 0.2:
            cells[-1, c] = vocab.index("-")
    for _ in range(rng.integers(3, 12)):
        r, c = rng.integers(1, h - 1), rng.integers(1, w)
        cells[r, c] = vocab.index(rng.choice(["X", "S", "?", "E", "%", "o", "t"]))
    return Level(cells)


def test_flat_ground_completes_moving_right(vocab):
    res = simulate(flat_level(vocab=vocab), vocab)
    assert res.completed and res.progress == 27
    xs = res.trace.points[:, 0]
    assert np.all(np.diff(xs) > 0)
    assert res.trace.points[-1, 0] == 27
    assert is_playable(flat_level(vocab=vocab), vocab)


def test_full_height_wall_blocks(vocab):
    lv = flat_level(vocab=vocab)
    cells = lv.cells.copy()
    cells[:, 5] = vocab.index("X")
    res = simulate(Level(cells), vocab)
    assert not res.completed and res.progress <= 5
    assert Oracle(Level(cells), vocab).distances() and max(c for c, _ in Oracle(Level(cells), vocab).distances()) <= 5


def test_seven_wide_gap_blocks(vocab):
    cells = flat_level(vocab=vocab).cells.copy()
    cells[-1, 10:17] = vocab.index("-")
    res = simulate(Level(cells), vocab)
    assert not res.completed
    assert max(c for c, _ in Oracle(Level(cells), vocab).distances()) < 10


def test_gap_limit_is_jump_carry(vocab):
    # a jump drifts at most 4 columns, so 3 missing floor tiles is the widest crossable gap
    for width, playable in [(3, True), (4, False)]:
        cells = flat_level(vocab=vocab).cells.copy()
        cells[-1, 10:10 + width] = vocab.index("-")
        assert is_playable(Level(cells), vocab) is playable


def test_all_solid_and_all_empty(vocab):
    solid = Level(np.full((14, 28), vocab.index("X")))
    empty = Level(np.full((14, 28), vocab.index("-")))
    assert not is_playable(solid, vocab)
    assert not is_playable(empty, vocab)
    res = simulate(solid, vocab)
    assert res.progress == 0 and len(res.trace) == 1


def test_no_spawn_fallback_uses_lowest_empty_row(vocab):
    lv = grid("""
        X---
        E---
        -XXX
        XXXX
    """)
    res = simulate(lv, vocab)
    assert not res.completed and res.progress == 0
    assert res.trace.cells() == [(0, 2)]


def test_hazard_is_fatal(vocab):
    lv = grid("""
        -----
        -----
        XXEXX
    """)
    # a one-wide hazard pit can be hopped
    assert is_playable(lv, vocab)
    walled = grid("""
        --E--
        --E--
        --E--
        XXXXX
    """)
    assert not is_playable(walled, vocab)


def test_platform_is_passable_and_supports(vocab):
    lv = grid("""
        ------
        ---%%%
        ------
        XX----
    """)
    res = simulate(lv, vocab)
    assert res.completed
    assert (5, 0) in res.trace.cells()


def test_matches_oracle_on_random_levels(vocab):
    rng = np.random.default_rng(7)
    for _ in range(150):
        lv = random_platform_level(rng, vocab=vocab)
        res = simulate(lv, vocab)
        dist = Oracle(lv, vocab).distances()
        goal = [s for s in dist if s[0] == lv.width - 1]
        assert res.completed == bool(goal)
        if dist:
            assert res.progress == max(c for c, _ in dist)
        if goal:
            # trace lists the spawn plus every swept tile of a shortest route
            assert len(res.trace) - 1 == min(dist[s] for s in goal)


def test_trace_is_continuous_and_passable(vocab, corpus):
    rng = np.random.default_rng(8)
    levels = list(corpus) + [random_platform_level(rng, vocab=vocab) for _ in range(60)]
    for lv in levels:
        res = simulate(lv, vocab)
        pts = res.trace.points
        steps = np.abs(np.diff(pts, axis=0)).max(axis=1) if len(pts) > 1 else np.zeros(0)
        assert np.all(steps <= MAX_STEP_DISPLACEMENT)
        assert pts[0, 0] == 0
        cats = vocab.categories
        if len(pts) > 1 or res.progress > 0:
            for c, r in res.trace.cells():
                assert cats[lv.cells[r, c]] in PASS
        if res.completed:
            assert res.progress == lv.width - 1 and pts[-1, 0] == lv.width - 1


def test_bundled_corpus_is_playable(vocab, corpus):
    assert all(is_playable(lv, vocab) for lv in corpus)


def test_determinism(vocab):
    rng = np.random.default_rng(9)
    lv = random_platform_level(rng, 14, 28, vocab)
    first = simulate(lv, vocab)
    for _ in range(100):
        _simulate_cached.cache_clear()
        assert simulate(Level(lv.cells.copy()), vocab) == first


def test_adding_hazard_never_helps(vocab):
    rng = np.random.default_rng(10)
    hazard = vocab.index("E")
    checked = 0
    while checked < 200:
        lv = random_platform_level(rng, vocab=vocab)
        if is_playable(lv, vocab):
            continue
        r, c = rng.integers(0, lv.height), rng.integers(0, lv.width)
        cells = lv.cells.copy()
        cells[r, c] = hazard
        assert not is_playable(Level(cells), vocab)
        checked += 1


def test_render_marks_exactly_trace_cells(vocab, corpus):
    lv = corpus[0]
    res = simulate(lv, vocab)
    text = render_trace(lv, vocab, res.trace, mark="x")
    marked = {(c, r) for r, row in enumerate(text.split("\n")) for c, ch in enumerate(row) if ch == "x"}
    assert marked == set(res.trace.cells())
    rows = trace_csv(res.trace).strip().split("\n")
    assert rows[0] == "step,x,y"
    from_csv = {(int(float(x)), int(float(y))) for _, x, y in (r.split(",") for r in rows[1:])}
    assert from_csv == marked
    assert len(rows) - 1 == len(res.trace)


def test_playtrace_validation():
    with pytest.raises(ValueError):
        Playtrace(np.zeros((0, 2)))
    t = Playtrace([[0, 1], [1, 1]])
    assert t.cells() == [(0, 1), (1, 1)]
