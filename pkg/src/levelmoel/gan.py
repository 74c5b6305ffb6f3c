"""Population GAN training: warm start, discriminator refresh, mutation, evaluation.

A population of generators shares one discriminator. Each generator carries
its own Adam state; offspring inherit a copy of their parent's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import EmptyCorpus, ShapeMismatch
from .levels import (
    DEFAULT_HEIGHT,
    DEFAULT_PATTERN_SIZE,
    DEFAULT_WIDTH,
    Level,
    TileVocabulary,
    decode_logits,
    extract_patterns,
    one_hot_batch,
    pooled_patterns,
)
from .metrics import PD_OFFSET, PD_SCALE, ObjectiveVector, objectives, tpjs
from .nn import (
    Z_DIM,
    AdamState,
    MlpParams,
    adam_update,
    channel_softmax,
    d_hinge_gradients,
    discriminator_dims,
    g_lsq_gradients,
    g_minmax_gradients,
    gaussian_noise_batch,
    generator_dims,
    generator_forward,
    init_mlp,
)

MODES = ("P", "P+PD", "P+CD", "P+PD+CD")
MUTATIONS = ("minmax", "lsq")

# stream tags for np.random.SeedSequence entropy
TRAIN_STREAM = 1
EVAL_STREAM = 2


@dataclass(frozen=True)
class TrainConfig:
    pop_size: int = 30
    generations: int = 100
    warm_epochs: int = 100
    d_iters: int = 1
    g_iters: int = 1
    batch_size: int = 32
    n_samples: int = 30
    z_dim: int = Z_DIM
    mode: str = "P+PD+CD"
    seed: int = 0
    g_lr: float = 1e-4
    g_weight_decay: float = 0.0
    d_lr: float = 4e-4
    d_weight_decay: float = 5e-4
    beta1: float = 0.0
    beta2: float = 0.9
    adam_eps: float = 1e-8
    g_hidden: tuple = (256, 256)
    d_hidden: tuple = (256, 64)
    height: int = DEFAULT_HEIGHT
    width: int = DEFAULT_WIDTH
    pattern_k: int = DEFAULT_PATTERN_SIZE
    pd_offset: float = PD_OFFSET
    pd_scale: float = PD_SCALE

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("pop_size", "batch_size", "z_dim", "height", "width", "pattern_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("generations", "warm_epochs", "d_iters", "g_iters"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")

    def level_shape(self, vocab: TileVocabulary) -> tuple[int, int, int]:
        return (self.height, self.width, vocab.size)


# b shrinks with the 16-level desk corpus so an epoch still holds several updates
DESK_PROFILE = dict(pop_size=8, generations=20, n_samples=10, warm_epochs=30, batch_size=4)


@dataclass
class Discriminator:
    params: MlpParams
    opt: AdamState

    def copy(self) -> "Discriminator":
        return Discriminator(self.params.copy(), self.opt.copy())


@dataclass
class PopulationMember:
    generator: MlpParams
    opt: AdamState
    member_id: int
    lineage: str
    generation: int
    objectives: ObjectiveVector | None = None
    parent_id: int | None = None

    def clone(self, **changes) -> "PopulationMember":
        base = replace(self, generator=self.generator.copy(), opt=self.opt.copy())
        return replace(base, **changes) if changes else base


def _check_corpus(corpus: Sequence[Level], cfg: TrainConfig) -> None:
    if not corpus:
        raise EmptyCorpus("training corpus is empty")
    for i, lv in enumerate(corpus):
        if lv.shape != (cfg.height, cfg.width):
            raise ShapeMismatch(f"corpus level {i} is {lv.shape}, expected {(cfg.height, cfg.width)}")


def new_generator_opt(G: MlpParams, cfg: TrainConfig) -> AdamState:
    return AdamState.for_params(G, cfg.g_lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.g_weight_decay)


def init_population(cfg: TrainConfig, vocab: TileVocabulary, rng: np.random.Generator) -> tuple[list[PopulationMember], Discriminator]:
    shape = cfg.level_shape(vocab)
    members = []
    for j in range(cfg.pop_size):
        G = init_mlp(generator_dims(cfg.z_dim, shape, cfg.g_hidden), rng)
        members.append(PopulationMember(G, new_generator_opt(G, cfg), member_id=j, lineage="init", generation=1))
    Dp = init_mlp(discriminator_dims(shape, cfg.d_hidden), rng)
    D = Discriminator(Dp, AdamState.for_params(Dp, cfg.d_lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.d_weight_decay))
    return members, D


def fake_counts(n_fake: int, n_generators: int) -> list[int]:
    """Split ``n_fake`` samples over generators; the remainder goes to the first ones."""
    base, rem = divmod(n_fake, n_generators)
    return [base + (1 if j < rem else 0) for j in range(n_generators)]


def _fake_batch(generators: Sequence[MlpParams], n_fake: int, cfg: TrainConfig, shape, rng) -> np.ndarray:
    parts = []
    for G, count in zip(generators, fake_counts(n_fake, len(generators))):
        if count == 0:
            continue
        z = gaussian_noise_batch(count, cfg.z_dim, rng)
        parts.append(channel_softmax(generator_forward(G, z, shape)))
    return np.concatenate(parts)


def discriminator_step(D: Discriminator, real: np.ndarray, generators: Sequence[MlpParams], cfg: TrainConfig, shape, rng) -> Discriminator:
    fake = _fake_batch(generators, len(real), cfg, shape, rng)
    _, grads = d_hinge_gradients(D.params, real, fake)
    params, opt = adam_update(D.params, grads, D.opt)
    return Discriminator(params, opt)


def generator_step(member: PopulationMember, D: MlpParams, cfg: TrainConfig, shape, rng, kind: str = "minmax") -> PopulationMember:
    z = gaussian_noise_batch(cfg.batch_size, cfg.z_dim, rng)
    grad_fn = g_minmax_gradients if kind == "minmax" else g_lsq_gradients
    _, grads = grad_fn(member.generator, D, z, shape)
    params, opt = adam_update(member.generator, grads, member.opt)
    return replace(member, generator=params, opt=opt)


def _corpus_batches(corpus_hot: np.ndarray, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(len(corpus_hot))
    for start in range(0, len(order), batch_size):
        yield corpus_hot[order[start:start + batch_size]]


def warm_start(corpus: Sequence[Level], cfg: TrainConfig, vocab: TileVocabulary, rng: np.random.Generator) -> tuple[list[PopulationMember], Discriminator]:
    """Pre-train ``cfg.pop_size`` generators against one shared discriminator.

    Per corpus batch: one hinge update of D on the real batch and an equally
    sized fake batch pooled from all generators, then one minmax step for
    every generator.
    """
    _check_corpus(corpus, cfg)
    shape = cfg.level_shape(vocab)
    members, D = init_population(cfg, vocab, rng)
    corpus_hot = one_hot_batch(corpus, vocab.size)
    for _ in range(cfg.warm_epochs):
        for real in _corpus_batches(corpus_hot, cfg.batch_size, rng):
            D = discriminator_step(D, real, [m.generator for m in members], cfg, shape, rng)
            members = [generator_step(m, D.params, cfg, shape, rng, "minmax") for m in members]
    return members, D


def refresh_discriminator(D: Discriminator, corpus: Sequence[Level], generators: Sequence[MlpParams], cfg: TrainConfig,
                          vocab: TileVocabulary, rng: np.random.Generator) -> Discriminator:
    """``cfg.d_iters`` passes of hinge updates over the corpus; generators stay fixed."""
    _check_corpus(corpus, cfg)
    shape = cfg.level_shape(vocab)
    corpus_hot = one_hot_batch(corpus, vocab.size)
    for _ in range(cfg.d_iters):
        for real in _corpus_batches(corpus_hot, cfg.batch_size, rng):
            D = discriminator_step(D, real, generators, cfg, shape, rng)
    return D


def variation(parents: Sequence[PopulationMember], D: MlpParams, cfg: TrainConfig, vocab: TileVocabulary,
              rng: np.random.Generator, next_id: int, generation: int) -> list[PopulationMember]:
    """Two offspring per parent: one trained with the minmax loss, one with least squares.

    Offspring order is [p1-minmax, p1-lsq, p2-minmax, ...]; ids are assigned
    consecutively from ``next_id``. Parents are not modified.
    """
    shape = cfg.level_shape(vocab)
    offspring = []
    for parent in parents:
        for kind in MUTATIONS:
            child = parent.clone(
                member_id=next_id,
                lineage=f"{parent.member_id}:{kind}",
                generation=generation,
                objectives=None,
                parent_id=parent.member_id,
            )
            next_id += 1
            for _ in range(cfg.g_iters):
                child = generator_step(child, D, cfg, shape, rng, kind)
            offspring.append(child)
    return offspring


def eval_rng(seed: int, trial: int, member_id: int, generation: int) -> np.random.Generator:
    """Evaluation stream keyed by (seed, trial, member, birth generation)."""
    return np.random.default_rng([seed, trial, EVAL_STREAM, member_id, generation])


def train_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial, TRAIN_STREAM])


def sample_levels(G: MlpParams, n: int, cfg: TrainConfig, vocab: TileVocabulary, rng: np.random.Generator) -> list[Level]:
    z = gaussian_noise_batch(n, cfg.z_dim, rng)
    logits = generator_forward(G, z, cfg.level_shape(vocab))
    return [decode_logits(x) for x in logits]


def evaluate_levels(levels: Sequence[Level], cfg: TrainConfig, vocab: TileVocabulary) -> ObjectiveVector:
    return objectives(levels, vocab, cfg.pattern_k, cfg.pd_offset, cfg.pd_scale)


def evaluate_generator(G: MlpParams, cfg: TrainConfig, vocab: TileVocabulary, rng: np.random.Generator,
                       return_levels: bool = False):
    """Sample ``cfg.n_samples`` levels and score them on all three objectives."""
    levels = sample_levels(G, cfg.n_samples, cfg, vocab, rng)
    obj = evaluate_levels(levels, cfg, vocab)
    return (obj, levels) if return_levels else obj


def mean_tpjs_to_corpus(generators: Sequence[MlpParams], corpus: Sequence[Level], n: int, cfg: TrainConfig,
                        vocab: TileVocabulary, rng: np.random.Generator) -> float:
    """Average TPJS between each generated sample and the pooled corpus pattern distribution."""
    ref = pooled_patterns(corpus, cfg.pattern_k)
    vals = []
    for G in generators:
        for lv in sample_levels(G, n, cfg, vocab, rng):
            vals.append(tpjs(extract_patterns(lv, cfg.pattern_k), ref))
    return float(np.mean(vals)) if vals else math.nan
