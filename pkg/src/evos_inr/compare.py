"""Strategy comparison and ablation tables built from run records."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable

from .config import ExperimentConfig
from .trainer import RunRecord, run_experiment

CHECKPOINTS = (1000, 2000, 5000)
TARGETS = (25.0, 30.0, 35.0)

# label -> overrides applied to an EVOS base config
ABLATIONS = {
    "evos": {},
    "wo_eval": {"use_fitness_eval": False},
    "theta_0": {"theta": 0.0},
    "tau_1": {"tau": 1.0},
    "tau_10": {"tau": 10.0},
    "wo_cross": {"use_crossover": False},
    "wo_cfs": {"lambda_high": 0.0},
    "wo_mutat": {"use_mutation": False},
    "alpha_0.1": {"alpha": 0.1},
    "alpha_1.0": {"alpha": 1.0},
}

# fields that must agree for rows to be comparable
_SHARED = ("backbone", "hidden_layers", "hidden_width", "omega_first", "omega_hidden",
           "pe_frequencies", "iters")


def strategy_configs(base: ExperimentConfig, strategies: Iterable[str]) -> list[ExperimentConfig]:
    """One config per strategy name; ``evos_wo_cfs`` is EVOS with ``lambda_high=0``."""
    out = []
    for name in strategies:
        over = {"label": name}
        if name == "evos_wo_cfs":
            over.update(strategy="evos", lambda_high=0.0)
        else:
            over["strategy"] = name
        out.append(base.model_copy(update=over))
    return out


def ablation_configs(base: ExperimentConfig, labels: Iterable[str] | None = None):
    labels = list(ABLATIONS) if labels is None else list(labels)
    configs = []
    for label in labels:
        if label not in ABLATIONS:
            raise ValueError(f"unknown ablation {label!r}; choose from {list(ABLATIONS)}")
        configs.append(base.model_copy(update={"strategy": "evos", "label": label,
                                               **ABLATIONS[label]}))
    return configs


def validate_comparable(configs: list[ExperimentConfig]) -> None:
    if not configs:
        raise ValueError("nothing to compare: empty config list")
    ref = configs[0]
    for cfg in configs[1:]:
        for key in _SHARED:
            if getattr(cfg, key) != getattr(ref, key):
                raise ValueError(f"configs disagree on {key}: {getattr(ref, key)!r} "
                                 f"vs {getattr(cfg, key)!r}")
    signals = defaultdict(set)
    for cfg in configs:
        signals[cfg.name].add(cfg.signal)
    first = next(iter(signals.values()))
    for name, sigs in signals.items():
        if sigs != first:
            raise ValueError(f"strategy {name!r} was run on a different signal set")


def compare_strategies(configs: list[ExperimentConfig], signals=None) -> list[RunRecord]:
    """Run every config and return their records, in order.

    ``signals`` optionally maps a config's ``signal`` path to a preloaded
    :class:`Signal`.
    """
    validate_comparable(configs)
    signals = signals or {}
    return [run_experiment(cfg, signals.get(cfg.signal)) for cfg in configs]


def _checkpoints(records, checkpoints):
    iters = records[0].config.iters
    return [c for c in checkpoints if c <= iters] or [iters]


def comparison_rows(records: list[RunRecord], checkpoints=CHECKPOINTS) -> list[dict]:
    """Per-(strategy, signal) quality at checkpoint iterations, plus a mean row per strategy."""
    if not records:
        raise ValueError("no records to tabulate")
    cps = _checkpoints(records, checkpoints)
    rows = []
    for rec in records:
        row = {"strategy": rec.config.name, "signal": Path(rec.config.signal).name or "-"}
        for c in cps:
            snap = rec.snapshot_at(c)
            row[f"psnr_{c}"] = snap.psnr if snap else math.nan
            row[f"ssim_{c}"] = snap.ssim if snap else math.nan
        row["time_s"] = rec.total_seconds
        rows.append(row)
    by_name = defaultdict(list)
    for row in rows:
        by_name[row["strategy"]].append(row)
    if any(len(group) > 1 for group in by_name.values()):
        for name, group in by_name.items():
            mean = {"strategy": name, "signal": "mean"}
            for key in group[0]:
                if key not in mean:
                    mean[key] = sum(r[key] for r in group) / len(group)
            rows.append(mean)
    return rows


def time_to_target_rows(records: list[RunRecord], targets=TARGETS) -> list[dict]:
    """Training seconds until each PSNR target is first reached (NaN if never)."""
    rows = []
    for rec in records:
        row = {"strategy": rec.config.name, "signal": Path(rec.config.signal).name or "-"}
        for target in targets:
            hit = rec.crossings.get(float(target))
            if hit is None:
                hit = _first_crossing(rec, target)
            row[f"t_{target:g}dB"] = hit[1] if hit else math.nan
        rows.append(row)
    return rows


def _first_crossing(rec: RunRecord, target: float):
    for snap in rec.snapshots:
        if snap.psnr >= target:
            return snap.iteration, snap.elapsed_seconds
    return None


def ablation_rows(records: list[RunRecord], early: int = 1000) -> list[dict]:
    rows = []
    for rec in records:
        final = rec.final or (rec.snapshots[-1] if rec.snapshots else None)
        t_early = min(early, rec.config.iters)
        rows.append({
            "setting": rec.config.name,
            f"psnr_{t_early}": rec.psnr_at(t_early),
            "psnr_final": final.psnr if final else math.nan,
            "ssim_final": final.ssim if final else math.nan,
            "time_s": rec.total_seconds,
        })
    return rows


def write_table(path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("empty table")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: f"{v:.6g}" if isinstance(v, float) else v
                             for k, v in row.items()})


def format_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0])
    cells = [[f"{r[k]:.4g}" if isinstance(r[k], float) else str(r[k]) for k in keys]
             for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    lines = ["  ".join(k.ljust(w) for k, w in zip(keys, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)
