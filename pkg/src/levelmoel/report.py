"""Indicator computation over finished run directories: HV, CPF, knee points, charts."""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import MissingLogs
from .indicators import DEFAULT_THETA, NADIR, ReferenceFront, build_pseudo_pf, front_of, population_cpf, population_hv
from .moea import knee_point

log = logging.getLogger(__name__)

OBJ_COLS = ("f_P", "f_PD", "f_CD")
INDICATOR_FIELDS = ["trial", "generation", "HV", "CPF", "mode", "seed", "run"]
MEAN_FIELDS = ["mode", "generation", "HV", "CPF", "trials"]
KNEE_FIELDS = ["trial", "mode", "f_P", "f_PD", "f_CD", "seed", "run"]
MODE_ORDER = ("P", "P+PD", "P+CD", "P+PD+CD")


@dataclass
class RunLog:
    run_dir: Path
    mode: str
    seed: int
    trial: int
    population: dict[int, np.ndarray]
    evaluations: np.ndarray

    @property
    def name(self) -> str:
        return f"{self.run_dir.parent.name}/{self.run_dir.name}"

    @property
    def final_generation(self) -> int:
        return max(self.population)


def run_labels(runs: Sequence[RunLog]) -> list[str]:
    """Run directories relative to their common ancestor, unique when the directories are."""
    dirs = [r.run_dir.resolve() for r in runs]
    if len(dirs) < 2:
        return [r.name for r in runs]
    root = Path(os.path.commonpath([d.parent for d in dirs]))
    return [d.relative_to(root).as_posix() for d in dirs]


def _read_objectives(path: Path) -> list[dict]:
    if not path.is_file():
        raise MissingLogs(f"missing log file {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise MissingLogs(f"log file {path} has no rows")
    return rows


def load_run(run_dir: str | Path) -> RunLog:
    run_dir = Path(run_dir)
    meta_path = run_dir / "run.json"
    if not meta_path.is_file():
        raise MissingLogs(f"{run_dir} is not a run directory (no run.json)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    pop_rows = _read_objectives(run_dir / "objectives.csv")
    eval_rows = _read_objectives(run_dir / "evaluations.csv")
    by_gen: dict[int, list] = defaultdict(list)
    for r in pop_rows:
        by_gen[int(r["generation"])].append([float(r[c]) for c in OBJ_COLS])
    population = {g: np.array(v) for g, v in sorted(by_gen.items())}
    evaluations = np.array([[float(r[c]) for c in OBJ_COLS] for r in eval_rows])
    return RunLog(run_dir, meta["mode"], int(meta["seed"]), int(meta["trial"]), population, evaluations)


def find_runs(paths: Iterable[str | Path]) -> list[Path]:
    """Run directories named directly or found below the given paths, in sorted order."""
    found = []
    for p in paths:
        p = Path(p)
        if (p / "run.json").is_file():
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(q.parent for q in p.rglob("run.json")))
        else:
            raise MissingLogs(f"{p} does not exist")
    if not found:
        raise MissingLogs("no completed runs found")
    return list(dict.fromkeys(found))


@dataclass
class IndicatorResult:
    reference: ReferenceFront
    rows: list[dict]
    means: list[dict]
    knees: list[dict]


def _knee_row(run: RunLog, label: str, reference: ReferenceFront, nadir: float) -> dict:
    F = front_of(run.population[run.final_generation])
    Fn = reference.normalise(F)
    inside = np.flatnonzero(np.all(Fn <= nadir, axis=1))
    if len(inside):
        pick = inside[knee_point(Fn[inside], [nadir] * Fn.shape[1])]
    else:
        # no front point within the box: fall back to the one closest to it
        pick = int(np.argmin(Fn.max(axis=1)))
    f = F[pick]
    return {"trial": run.trial, "mode": run.mode, "f_P": float(f[0]), "f_PD": float(f[1]), "f_CD": float(f[2]),
            "seed": run.seed, "run": label}


def compute_indicators(runs: Sequence[RunLog], theta: float = DEFAULT_THETA, nadir: float = NADIR) -> IndicatorResult:
    """Shared pseudo-front over every evaluated generator of every run, then per-generation HV and CPF."""
    if not runs:
        raise MissingLogs("no runs to score")
    reference = build_pseudo_pf(np.concatenate([r.evaluations for r in runs]))
    labels = run_labels(runs)
    rows = []
    for run, label in zip(runs, labels):
        for g, F in run.population.items():
            rows.append({
                "trial": run.trial,
                "generation": g,
                "HV": population_hv(F, reference, nadir),
                "CPF": population_cpf(F, reference, theta),
                "mode": run.mode,
                "seed": run.seed,
                "run": label,
            })
    groups: dict[tuple[str, int], list[dict]] = defaultdict(list)
    for r in rows:
        groups[(r["mode"], r["generation"])].append(r)
    means = []
    for (mode, g), rs in sorted(groups.items(), key=lambda kv: (_mode_key(kv[0][0]), kv[0][1])):
        means.append({
            "mode": mode,
            "generation": g,
            "HV": float(np.mean([r["HV"] for r in rs])),
            "CPF": float(np.mean([r["CPF"] for r in rs])),
            "trials": len(rs),
        })
    knees = [_knee_row(run, label, reference, nadir) for run, label in zip(runs, labels)]
    return IndicatorResult(reference, rows, means, knees)


def _mode_key(mode: str):
    return (MODE_ORDER.index(mode) if mode in MODE_ORDER else len(MODE_ORDER), mode)


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _write_rows(path: Path, fields: Sequence[str], rows: Sequence[dict]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[f]) for f in fields])
    return path


def write_indicators(result: IndicatorResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "indicators": _write_rows(out / "indicators.csv", INDICATOR_FIELDS, result.rows),
        "means": _write_rows(out / "indicators_mean.csv", MEAN_FIELDS, result.means),
        "knees": _write_rows(out / "knees.csv", KNEE_FIELDS, result.knees),
    }
    ref_rows = [dict(zip(OBJ_COLS, map(float, p))) for p in result.reference.points]
    paths["reference"] = _write_rows(out / "reference_front.csv", list(OBJ_COLS), ref_rows)
    paths["bounds"] = out / "reference_bounds.json"
    paths["bounds"].write_text(json.dumps({
        "lower": result.reference.lower.tolist(),
        "upper": result.reference.upper.tolist(),
    }, indent=2), encoding="utf-8")
    paths["chart"] = plot_mean_hv(result.means, out / "hv_mean.svg")
    return paths


def plot_mean_hv(means: Sequence[dict], path: str | Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "levelmoel"
    series: dict[str, list[tuple[int, float]]] = defaultdict(list)
    for r in means:
        series[r["mode"]].append((r["generation"], r["HV"]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode in sorted(series, key=_mode_key):
        g, hv = zip(*sorted(series[mode]))
        ax.plot(g, hv, marker="o", markersize=3, label=f"A_{{{mode}}}")
    ax.set_xlabel("generation")
    ax.set_ylabel("mean HV")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def summarize(indicator_dir: str | Path) -> str:
    """Plain-text table of final-generation HV/CPF and knee medians per mode."""
    d = Path(indicator_dir)
    rows = read_csv(d / "indicators.csv") if (d / "indicators.csv").is_file() else None
    if rows is None:
        raise MissingLogs(f"{d} has no indicators.csv; run the indicators command first")
    knees = read_csv(d / "knees.csv") if (d / "knees.csv").is_file() else []
    final: dict[str, dict] = {}
    for r in rows:
        key = r["run"]
        if key not in final or int(r["generation"]) > int(final[key]["generation"]):
            final[key] = r
    by_mode: dict[str, list[dict]] = defaultdict(list)
    for r in final.values():
        by_mode[r["mode"]].append(r)
    lines = ["mode       runs  HV mean   HV std    HV median  CPF mean  knee f_P  knee f_PD  knee f_CD"]
    for mode in sorted(by_mode, key=_mode_key):
        hv = np.array([float(r["HV"]) for r in by_mode[mode]])
        cp = np.array([float(r["CPF"]) for r in by_mode[mode]])
        kn = np.array([[float(k[c]) for c in OBJ_COLS] for k in knees if k["mode"] == mode]).reshape(-1, 3)
        kmed = np.median(kn, axis=0) if len(kn) else np.full(3, np.nan)
        lines.append(f"{mode:<10} {len(hv):>4}  {hv.mean():<8.4f}  {hv.std():<8.4f}  {np.median(hv):<9.4f}  "
                     f"{cp.mean():<8.4f}  {kmed[0]:<8.4f}  {kmed[1]:<9.4f}  {kmed[2]:.4f}")
    return "\n".join(lines)
