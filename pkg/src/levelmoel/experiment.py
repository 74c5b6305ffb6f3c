"""Configuration, the evolutionary training loop, and run artifacts.

A run directory holds one trial of one mode::

    run.json            resolved configuration, mode, seed, trial
    objectives.csv      population after every generation (generation 1 = warm start)
    evaluations.csv     every generator ever evaluated, keyed by birth generation
    manifest.json       final population with checkpoint paths and objectives
    checkpoints/        one JSON checkpoint per surviving generator
    samples/            evaluation levels of the survivors, with trace renders
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .errors import ConfigError, NonFiniteObjective
from .gan import (
    DESK_PROFILE,
    PopulationMember,
    TrainConfig,
    eval_rng,
    evaluate_generator,
    refresh_discriminator,
    train_rng,
    variation,
    warm_start,
)
from .indicators import DEFAULT_THETA
from .levels import Level, TileVocabulary, load_bundled_corpus, load_corpus, serialize_level
from .metrics import ObjectiveVector
from .moea import select_members
from .nn import load_checkpoint, save_params
from .sim import render_trace, simulate, trace_csv

log = logging.getLogger(__name__)

OBJECTIVE_FIELDS = ["generation", "member_id", "lineage", "f_P", "f_PD", "f_CD", "P", "PD", "CD"]
PROFILES = ("full", "desk")


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    corpus: str | None = None
    vocab: str | None = None
    trials: int = 1
    output: str = "runs/default"
    theta: float = DEFAULT_THETA
    profile: str = "full"
    save_samples: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}")
        if not self.theta > 0:
            raise ConfigError("theta must be positive")

    @property
    def mode(self) -> str:
        return self.train.mode

    @property
    def seed(self) -> int:
        return self.train.seed

    def flat(self) -> dict:
        out = {k: v for k, v in dataclasses.asdict(self.train).items()}
        for f in dataclasses.fields(self):
            if f.name != "train":
                out[f.name] = getattr(self, f.name)
        return out


_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_EXP_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig) if f.name != "train"}


def config_keys() -> list[str]:
    return list(_TRAIN_FIELDS) + list(_EXP_FIELDS)


def _coerce(name: str, raw, default):
    if isinstance(raw, str):
        text = raw.strip()
    else:
        return tuple(raw) if isinstance(default, tuple) else raw
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
        if default is None or isinstance(default, str):
            return None if text.lower() in ("", "none") else text
    except ValueError:
        raise ConfigError(f"config field {name!r}: cannot parse {raw!r}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TRAIN_FIELDS and key not in _EXP_FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown field {key!r}")
        values[key] = value
    return values


def load_config_file(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    return parse_config_text(text, str(p))


def build_config(values: dict | None = None) -> ExperimentConfig:
    """Resolve a config from flat key/value pairs; the desk profile fills in its defaults first."""
    values = dict(values or {})
    profile = str(values.get("profile", "full")).strip()
    train_kwargs: dict = {}
    if profile == "desk":
        train_kwargs.update(DESK_PROFILE)
    exp_kwargs: dict = {}
    for key, raw in values.items():
        if key in _TRAIN_FIELDS:
            default = _TRAIN_FIELDS[key].default
            train_kwargs[key] = _coerce(key, raw, default)
        elif key in _EXP_FIELDS:
            f = _EXP_FIELDS[key]
            default = f.default if f.default is not dataclasses.MISSING else None
            exp_kwargs[key] = _coerce(key, raw, default)
        else:
            raise ConfigError(f"unknown config field {key!r}")
    try:
        train = TrainConfig(**train_kwargs)
        return ExperimentConfig(train=train, **exp_kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def describe_config(cfg: ExperimentConfig) -> str:
    return "\n".join(f"{k} = {_fmt_value(v)}" for k, v in cfg.flat().items())


def _fmt_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def load_inputs(cfg: ExperimentConfig) -> tuple[TileVocabulary, list[Level]]:
    vocab = TileVocabulary.from_file(cfg.vocab) if cfg.vocab else TileVocabulary.default()
    if cfg.corpus:
        if not Path(cfg.corpus).is_dir():
            raise ConfigError(f"corpus directory {cfg.corpus!r} does not exist")
        corpus = load_corpus(cfg.corpus, vocab)
    else:
        corpus = load_bundled_corpus(vocab)
    return vocab, corpus


@dataclass
class RunArtifacts:
    run_dir: Path
    objectives_csv: Path
    evaluations_csv: Path
    manifest: Path
    checkpoints: list[Path]
    samples: list[Path]
    final_population: list[PopulationMember] = field(repr=False, default_factory=list)


def _obj_row(generation: int, m: PopulationMember) -> list:
    o = m.objectives
    return [generation, m.member_id, m.lineage] + [repr(float(v)) for v in (o.f_P, o.f_PD, o.f_CD, o.P, o.PD, o.CD)]


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _dump_diagnostic(run_dir: Path, member: PopulationMember, cfg: ExperimentConfig, trial: int, levels,
                     vocab: TileVocabulary) -> Path:
    path = run_dir / "diagnostic.json"
    doc = {
        "error": "non-finite objective",
        "member_id": member.member_id,
        "lineage": member.lineage,
        "generation": member.generation,
        "objectives": dataclasses.asdict(member.objectives) if member.objectives else None,
        "generator_finite": member.generator.all_finite(),
        "seed": cfg.seed,
        "trial": trial,
        "levels": [serialize_level(lv, vocab) for lv in levels] if levels else [],
    }
    path.write_text(json.dumps(doc, indent=2, default=repr), encoding="utf-8")
    return path


def _evaluate(member: PopulationMember, cfg: ExperimentConfig, trial: int, vocab: TileVocabulary, run_dir: Path) -> PopulationMember:
    rng = eval_rng(cfg.seed, trial, member.member_id, member.generation)
    try:
        obj, levels = evaluate_generator(member.generator, cfg.train, vocab, rng, return_levels=True)
    except ValueError:
        levels = None
        obj = ObjectiveVector(math.nan, math.nan, math.nan)
    member = dataclasses.replace(member, objectives=obj)
    if not obj.is_finite():
        path = _dump_diagnostic(run_dir, member, cfg, trial, levels, vocab)
        raise NonFiniteObjective(
            f"trial {trial}: generator {member.member_id} (generation {member.generation}) has a non-finite objective; see {path}"
        )
    return member


def run_trial(cfg: ExperimentConfig, trial: int, run_dir: Path, vocab: TileVocabulary, corpus: Sequence[Level],
              progress: Callable[[str], None] | None = None) -> RunArtifacts:
    """One full training run: warm start, then generations 2..T of refresh/variation/selection."""
    tc = cfg.train
    run_dir.mkdir(parents=True, exist_ok=True)
    say = progress or log.info
    meta = {"mode": tc.mode, "seed": tc.seed, "trial": trial, "config": cfg.flat(), "vocab": vocab.to_text()}
    (run_dir / "run.json").write_text(json.dumps(meta, indent=2, default=list), encoding="utf-8")

    rng = train_rng(tc.seed, trial)
    members, D = warm_start(corpus, tc, vocab, rng)
    members = [_evaluate(m, cfg, trial, vocab, run_dir) for m in members]
    next_id = len(members)

    eval_rows = [_obj_row(m.generation, m) for m in members]
    pop_rows = [_obj_row(1, m) for m in members]
    say(f"[{tc.mode} trial {trial}] generation 1 evaluated ({len(members)} generators)")

    t = 1
    while t < tc.generations:
        D = refresh_discriminator(D, corpus, [m.generator for m in members], tc, vocab, rng)
        offspring = variation(members, D.params, tc, vocab, rng, next_id, generation=t + 1)
        next_id += len(offspring)
        offspring = [_evaluate(m, cfg, trial, vocab, run_dir) for m in offspring]
        eval_rows.extend(_obj_row(m.generation, m) for m in offspring)
        members = select_members(members + offspring, tc.pop_size, tc.mode)
        t += 1
        pop_rows.extend(_obj_row(t, m) for m in members)
        say(f"[{tc.mode} trial {trial}] generation {t} done")

    objectives_csv = run_dir / "objectives.csv"
    evaluations_csv = run_dir / "evaluations.csv"
    _write_csv(objectives_csv, OBJECTIVE_FIELDS, pop_rows)
    _write_csv(evaluations_csv, OBJECTIVE_FIELDS, eval_rows)

    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    checkpoints, entries, samples = [], [], []
    shape = tc.level_shape(vocab)
    for m in members:
        path = ckpt_dir / f"generator_{m.member_id:05d}.json"
        save_params(
            path,
            m.generator,
            level_shape=list(shape),
            z_dim=tc.z_dim,
            vocab=vocab.to_text(),
            member_id=m.member_id,
            generation=m.generation,
            lineage=m.lineage,
            rng_note=f"evaluation latents: numpy default_rng([{tc.seed}, {trial}, 2, {m.member_id}, {m.generation}])",
        )
        checkpoints.append(path)
        entries.append({
            "member_id": m.member_id,
            "lineage": m.lineage,
            "generation": m.generation,
            "checkpoint": str(path.relative_to(run_dir)),
            "objectives": {k: float(v) for k, v in dataclasses.asdict(m.objectives).items()},
        })
        if cfg.save_samples:
            samples.extend(_write_member_samples(run_dir / "samples" / f"generator_{m.member_id:05d}", m, cfg, trial, vocab))
    manifest = run_dir / "manifest.json"
    manifest.write_text(json.dumps({
        "mode": tc.mode,
        "seed": tc.seed,
        "trial": trial,
        "generations": tc.generations,
        "members": entries,
    }, indent=2), encoding="utf-8")
    return RunArtifacts(run_dir, objectives_csv, evaluations_csv, manifest, checkpoints, samples, members)


def _write_member_samples(out: Path, m: PopulationMember, cfg: ExperimentConfig, trial: int, vocab: TileVocabulary) -> list[Path]:
    from .gan import sample_levels

    out.mkdir(parents=True, exist_ok=True)
    levels = sample_levels(m.generator, cfg.train.n_samples, cfg.train, vocab, eval_rng(cfg.seed, trial, m.member_id, m.generation))
    written = []
    for i, lv in enumerate(levels):
        written.extend(write_level_bundle(out, f"level_{i:03d}", lv, vocab))
    return written


def write_level_bundle(out: Path, stem: str, level: Level, vocab: TileVocabulary) -> list[Path]:
    """Level text, trace overlay and trace CSV for one level."""
    res = simulate(level, vocab)
    paths = [out / f"{stem}.txt", out / f"{stem}.trace.txt", out / f"{stem}.trace.csv"]
    paths[0].write_text(serialize_level(level, vocab) + "\n", encoding="utf-8")
    paths[1].write_text(render_trace(level, vocab, res.trace) + "\n", encoding="utf-8")
    paths[2].write_text(trace_csv(res.trace), encoding="utf-8")
    return paths


def run_experiment(cfg: ExperimentConfig, progress: Callable[[str], None] | None = None) -> list[RunArtifacts]:
    """Run ``cfg.trials`` independent trials into ``<output>/trial_XX``."""
    vocab, corpus = load_inputs(cfg)
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    return [run_trial(cfg, trial, out / f"trial_{trial:02d}", vocab, corpus, progress) for trial in range(cfg.trials)]


def reevaluate_manifest(run_dir: str | Path) -> list[tuple[ObjectiveVector, ObjectiveVector]]:
    """Reload every manifest checkpoint and re-score it on its original evaluation stream."""
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "run.json").read_text(encoding="utf-8"))
    cfg = build_config({k: v for k, v in meta["config"].items()})
    vocab = TileVocabulary.from_text(meta["vocab"])
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    pairs = []
    for entry in manifest["members"]:
        G, _ = load_checkpoint(run_dir / entry["checkpoint"])
        rng = eval_rng(meta["seed"], meta["trial"], entry["member_id"], entry["generation"])
        fresh = evaluate_generator(G, cfg.train, vocab, rng)
        pairs.append((ObjectiveVector(**entry["objectives"]), fresh))
    return pairs
