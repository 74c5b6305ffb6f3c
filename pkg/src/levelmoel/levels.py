"""Tile-grid levels: vocabulary, text I/O, one-hot coding and tile patterns."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    NonFiniteInput,
    PatternTooLarge,
    RaggedLines,
    ShapeMismatch,
    UnknownSymbol,
)

DEFAULT_HEIGHT = 14
DEFAULT_WIDTH = 28
DEFAULT_PATTERN_SIZE = 2


class Category(enum.Enum):
    EMPTY = "Empty"
    SOLID = "Solid"
    BREAKABLE = "Breakable"
    QUESTION_BOX = "QuestionBox"
    COIN = "Coin"
    HAZARD = "Hazard"
    PIPE_BODY = "PipeBody"
    PLATFORM = "Platform"

    @classmethod
    def parse(cls, name: str) -> "Category":
        for cat in cls:
            if cat.value.lower() == name.strip().lower():
                return cat
        raise ValueError(f"unknown tile category {name!r}")


# Semantic vocabulary; symbols follow the VGLC Mario conventions where one exists.
DEFAULT_ENTRIES = (
    ("-", Category.EMPTY),
    ("X", Category.SOLID),
    ("S", Category.BREAKABLE),
    ("?", Category.QUESTION_BOX),
    ("o", Category.COIN),
    ("E", Category.HAZARD),
    ("t", Category.PIPE_BODY),
    ("%", Category.PLATFORM),
)


@dataclass(frozen=True)
class TileVocabulary:
    """Ordered tile alphabet. An entry's position is its one-hot channel."""

    entries: tuple[tuple[str, Category], ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple((str(s), Category(c)) for s, c in self.entries)
        object.__setattr__(self, "entries", entries)
        symbols = [s for s, _ in entries]
        if any(len(s) != 1 for s in symbols):
            raise ValueError("tile symbols must be single characters")
        if len(set(symbols)) != len(symbols):
            raise ValueError("tile symbols must be unique")
        if len(entries) < 2:
            raise ValueError("vocabulary needs at least two entries")
        cats = {c for _, c in entries}
        if Category.EMPTY not in cats or Category.SOLID not in cats:
            raise ValueError("vocabulary must contain Empty and Solid categories")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    @classmethod
    def default(cls) -> "TileVocabulary":
        return cls(DEFAULT_ENTRIES)

    @classmethod
    def from_text(cls, text: str) -> "TileVocabulary":
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            # the symbol itself may be '#', so split from the right
            parts = line.rstrip().rsplit(None, 1)
            if len(parts) != 2 or len(parts[0].strip()) != 1:
                raise ValueError(f"vocabulary line {lineno}: expected '<char> <category>', got {line!r}")
            entries.append((parts[0].strip(), Category.parse(parts[1])))
        return cls(tuple(entries))

    @classmethod
    def from_file(cls, path: str | Path) -> "TileVocabulary":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        return "\n".join(f"{s} {c.value}" for s, c in self.entries) + "\n"

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def symbols(self) -> list[str]:
        return [s for s, _ in self.entries]

    @property
    def categories(self) -> list[Category]:
        return [c for _, c in self.entries]

    def index(self, symbol: str) -> int:
        return self._index[symbol]

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def first_of(self, category: Category) -> int:
        for i, (_, c) in enumerate(self.entries):
            if c is category:
                return i
        raise KeyError(category)


@dataclass(frozen=True, eq=False)
class Level:
    cells: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int16, copy=True)
        if cells.ndim != 2 or cells.size == 0:
            raise ShapeMismatch(f"level cells must be a non-empty 2D array, got shape {cells.shape}")
        if cells.min() < 0:
            raise ValueError("level cells must be non-negative vocabulary indices")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def key(self) -> bytes:
        """Hashable fingerprint of the grid (shape + contents)."""
        h, w = self.cells.shape
        return h.to_bytes(2, "little") + w.to_bytes(2, "little") + self.cells.tobytes()

    def __eq__(self, other):
        if not isinstance(other, Level):
            return NotImplemented
        return self.cells.shape == other.cells.shape and bool(np.array_equal(self.cells, other.cells))

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True)
class PatternDistribution:
    k: int
    counts: dict
    total: int

    def probabilities(self) -> dict:
        return {p: c / self.total for p, c in self.counts.items()}


def parse_level(text: str, vocab: TileVocabulary) -> Level:
    """Parse newline-separated rows (top row first) into a :class:`Level`."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    lines = [ln.rstrip("\r") for ln in lines]
    if not lines or all(ln == "" for ln in lines):
        raise EmptyInput("level text is empty")
    width = len(lines[0])
    for r, ln in enumerate(lines):
        if len(ln) != width:
            raise RaggedLines(f"row {r} has length {len(ln)}, expected {width}")
    if width == 0:
        raise EmptyInput("level rows are empty")
    cells = np.empty((len(lines), width), dtype=np.int16)
    for r, ln in enumerate(lines):
        for c, ch in enumerate(ln):
            if ch not in vocab:
                raise UnknownSymbol(r, c, ch)
            cells[r, c] = vocab.index(ch)
    return Level(cells)


def serialize_level(level: Level, vocab: TileVocabulary) -> str:
    symbols = vocab.symbols
    return "\n".join("".join(symbols[v] for v in row) for row in level.cells.tolist())


def load_level(path: str | Path, vocab: TileVocabulary) -> Level:
    return parse_level(Path(path).read_text(encoding="utf-8"), vocab)


def load_corpus(directory: str | Path, vocab: TileVocabulary, pattern: str = "*.txt") -> list[Level]:
    """Load every level file in ``directory`` in sorted filename order."""
    paths = sorted(Path(directory).glob(pattern))
    return [load_level(p, vocab) for p in paths]


def default_vocabulary_path() -> Path:
    return Path(str(resources.files("levelmoel") / "data" / "vocab.txt"))


def bundled_corpus_dir() -> Path:
    return Path(str(resources.files("levelmoel") / "data" / "corpus"))


def load_bundled_corpus(vocab: TileVocabulary | None = None) -> list[Level]:
    vocab = vocab or TileVocabulary.default()
    return load_corpus(bundled_corpus_dir(), vocab)


def one_hot(level: Level, vocab_size: int) -> np.ndarray:
    """H x W x V float64 grid with a single 1 per cell."""
    if level.cells.max() >= vocab_size:
        raise ValueError(f"cell index {int(level.cells.max())} out of range for V={vocab_size}")
    return np.eye(vocab_size, dtype=np.float64)[level.cells]


def one_hot_batch(levels: Sequence[Level], vocab_size: int) -> np.ndarray:
    return np.stack([one_hot(lv, vocab_size) for lv in levels])


def decode_logits(logits: np.ndarray) -> Level:
    """Per-cell argmax over the channel axis; ties go to the lowest channel."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3:
        raise ShapeMismatch(f"expected H x W x V logits, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise NonFiniteInput("logits contain NaN or infinite values")
    # np.argmax returns the first maximal index, which is the tie rule we want
    return Level(np.argmax(logits, axis=-1))


def extract_patterns(level: Level, k: int = DEFAULT_PATTERN_SIZE) -> PatternDistribution:
    """Count every k x k window (stride 1) of the level."""
    h, w = level.shape
    if k < 1 or k > min(h, w):
        raise PatternTooLarge(f"pattern size {k} does not fit a {h}x{w} level")
    windows = np.lib.stride_tricks.sliding_window_view(level.cells, (k, k))
    flat = windows.reshape(-1, k * k)
    uniq, counts = np.unique(flat, axis=0, return_counts=True)
    table = {tuple(int(v) for v in row): int(c) for row, c in zip(uniq, counts)}
    return PatternDistribution(k=k, counts=table, total=int(flat.shape[0]))


def pooled_patterns(levels: Iterable[Level], k: int = DEFAULT_PATTERN_SIZE) -> PatternDistribution:
    """Sum the window counts of several levels into one distribution."""
    counts: dict = {}
    total = 0
    for lv in levels:
        dist = extract_patterns(lv, k)
        for p, c in dist.counts.items():
            counts[p] = counts.get(p, 0) + c
        total += dist.total
    if total == 0:
        raise EmptyInput("no levels to pool")
    return PatternDistribution(k=k, counts=counts, total=total)


def hamming(a: Level, b: Level) -> int:
    if a.shape != b.shape:
        raise ShapeMismatch(f"levels differ in shape: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a.cells != b.cells))
