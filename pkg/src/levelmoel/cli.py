"""Command line entry point: ``levelmoel {train,sample,render,indicators,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import LevelMoelError
from .experiment import (
    build_config,
    config_keys,
    describe_config,
    load_config_file,
    run_experiment,
    write_level_bundle,
)
from .gan import TrainConfig, sample_levels
from .indicators import DEFAULT_THETA, NADIR
from .levels import TileVocabulary, load_level
from .nn import load_checkpoint
from .report import compute_indicators, find_runs, load_run, summarize, write_indicators
from .sim import render_trace, simulate, trace_csv

log = logging.getLogger("levelmoel")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    for key in config_keys():
        p.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", metavar="VALUE", default=None,
                       help=argparse.SUPPRESS if key in ("g_hidden", "d_hidden") else None)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="levelmoel", description=__doc__)
    ap.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the evolutionary training loop")
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config field")
    _add_config_flags(p)

    p = sub.add_parser("sample", help="sample levels from a generator checkpoint")
    p.add_argument("checkpoint", help="generator_XXXXX.json from a run's checkpoints folder")
    p.add_argument("--count", type=int, default=10, help="levels to draw (default 10)")
    p.add_argument("--seed", type=int, default=0, help="latent noise seed")
    p.add_argument("--output", default="samples", help="output directory (default: samples)")

    p = sub.add_parser("render", help="simulate levels and print the trace overlay")
    p.add_argument("levels", nargs="+")
    p.add_argument("--vocab", help="vocabulary file (default: bundled)")
    p.add_argument("--output", help="also write .trace.txt and .trace.csv files here")

    p = sub.add_parser("indicators", help="HV/CPF/knee tables and HV chart over finished runs")
    p.add_argument("runs", nargs="+", help="run directories or parents containing them")
    p.add_argument("--output", default="indicators", help="output directory (default: indicators)")
    p.add_argument("--theta", type=float, default=DEFAULT_THETA, help="CPF Chebyshev radius (default %(default)s)")
    p.add_argument("--nadir", type=float, default=NADIR, help="HV nadir per axis (default %(default)s)")

    p = sub.add_parser("report", help="summarise an indicators directory")
    p.add_argument("indicators", help="directory written by the indicators command")
    return ap


def _train(args) -> int:
    values = load_config_file(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise LevelMoelError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    for key in config_keys():
        v = getattr(args, f"cfg_{key}")
        if v is not None:
            values[key] = v
    cfg = build_config(values)
    print(describe_config(cfg), flush=True)
    arts = run_experiment(cfg, progress=log.info)
    for a in arts:
        print(f"wrote {a.run_dir}")
    return 0


def _sample(args) -> int:
    if args.count < 0:
        raise LevelMoelError("--count must be non-negative")
    G, doc = load_checkpoint(args.checkpoint)
    try:
        vocab = TileVocabulary.from_text(doc["vocab"]) if "vocab" in doc else TileVocabulary.default()
        h, w, _ = doc["level_shape"]
        z_dim = int(doc.get("z_dim", G.in_dim))
    except (KeyError, ValueError, TypeError) as exc:
        raise LevelMoelError(f"checkpoint {args.checkpoint} lacks level metadata: {exc}") from exc
    out = Path(args.output)
    if args.count == 0:
        return 0
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(height=int(h), width=int(w), z_dim=z_dim)
    levels = sample_levels(G, args.count, cfg, vocab, np.random.default_rng(args.seed))
    for i, lv in enumerate(levels):
        write_level_bundle(out, f"sample_{i:03d}", lv, vocab)
    print(f"wrote {len(levels)} levels to {out}")
    return 0


def _render(args) -> int:
    vocab = TileVocabulary.from_file(args.vocab) if args.vocab else TileVocabulary.default()
    out = Path(args.output) if args.output else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for path in args.levels:
        level = load_level(path, vocab)
        res = simulate(level, vocab)
        status = "completed" if res.completed else f"failed (progress {res.progress:.2f})"
        print(f"{path}: {status}")
        print(render_trace(level, vocab, res.trace))
        if out:
            stem = Path(path).stem
            (out / f"{stem}.trace.txt").write_text(render_trace(level, vocab, res.trace) + "\n", encoding="utf-8")
            (out / f"{stem}.trace.csv").write_text(trace_csv(res.trace), encoding="utf-8")
    return 0


def _indicators(args) -> int:
    runs = [load_run(p) for p in find_runs(args.runs)]
    result = compute_indicators(runs, theta=args.theta, nadir=args.nadir)
    paths = write_indicators(result, args.output)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def _report(args) -> int:
    print(summarize(args.indicators))
    return 0


COMMANDS = {"train": _train, "sample": _sample, "render": _render, "indicators": _indicators, "report": _report}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (LevelMoelError, OSError) as exc:
        print(f"levelmoel {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
