"""Multi-objective evolutionary training of tile-level GAN generators.

Generators are scored on playability, player-trace diversity and content
diversity, and a population of them is evolved under Pareto selection.
"""

from .errors import LevelMoelError
from .levels import Level, TileVocabulary, load_bundled_corpus, load_level, parse_level, serialize_level
from .metrics import ObjectiveVector, dtw, objectives, tpjs
from .sim import Playtrace, SimResult, simulate

__version__ = "0.1.0"

__all__ = [
    "Level",
    "LevelMoelError",
    "ObjectiveVector",
    "Playtrace",
    "SimResult",
    "TileVocabulary",
    "dtw",
    "load_bundled_corpus",
    "load_level",
    "objectives",
    "parse_level",
    "serialize_level",
    "simulate",
    "tpjs",
]
