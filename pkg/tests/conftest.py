import numpy as np
import pytest

from levelmoel.levels import Level, TileVocabulary, load_bundled_corpus, parse_level


@pytest.fixture(scope="session")
def vocab():
    return TileVocabulary.default()


@pytest.fixture(scope="session")
def corpus(vocab):
    return load_bundled_corpus(vocab)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grid(text: str, vocab=None) -> Level:
    """Parse a level written as an indented block."""
    lines = [ln.strip() for ln in text.strip().splitlines()]
    return parse_level("\n".join(lines), vocab or TileVocabulary.default())


def flat_level(h=14, w=28, vocab=None) -> Level:
    vocab = vocab or TileVocabulary.default()
    cells = np.full((h, w), vocab.index("-"), dtype=np.int16)
    cells[-1, :] = vocab.index("X")
    return Level(cells)
