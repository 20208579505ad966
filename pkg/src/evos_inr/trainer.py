"""Training loop, timing instrumentation and experiment export.

Three strategies share one loop:

* ``standard``: every coordinate, every iteration, plain MSE;
* ``uniform``: ``q(t)`` coordinates drawn uniformly, plain MSE;
* ``evos``: evolutionary selection of ``q(t)`` coordinates with
  cross-frequency supervision.

Wall-clock is measured per phase with a monotonic clock. Evaluation
snapshots (full-grid PSNR/SSIM) are never counted as training time.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import ExperimentConfig, dump_config
from .laplacian import laplacian
from .loss import LossReport, cross_frequency_loss, mse_loss
from .metrics import QualitySnapshot, mse, psnr_from_mse, ssim
from .mlp import Adam, MlpModel, load_checkpoint, save_checkpoint
from .rng import make_rng
from .schedule import selection_size, survivor_count
from .selector import EvolutionarySelector, uniform_subset
from .signal import Signal, load_audio, load_image, save_reconstruction

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "elapsed_s", "loss_total", "loss_low", "loss_high", "psnr", "ssim",
               "q", "k", "gamma", "select_ms", "fwd_ms", "bwd_ms", "opt_ms")
PHASES = ("select", "refresh", "forward", "backward", "optimizer")


class TrainingAborted(RuntimeError):
    pass


def load_signal(config: ExperimentConfig) -> Signal:
    path = Path(config.signal)
    if path.suffix.lower() == ".wav":
        return load_audio(path, config.audio_seconds, config.sample_rate)
    return load_image(path, config.center_crop)


@dataclass
class StepResult:
    t: int
    loss: LossReport
    q: int
    k: int
    gamma: int
    timings: dict[str, float]

    @property
    def seconds(self) -> float:
        return sum(self.timings.values())


class Trainer:
    """One training run: model, optimizer, selector and random stream."""

    def __init__(self, config: ExperimentConfig, signal: Signal):
        self.config = config
        self.signal = signal
        self.n = signal.size
        mlp_cfg = config.mlp_config(signal.grid.rank, signal.grid.channels)
        self.model = MlpModel.init(mlp_cfg, config.seed)
        self.adam = Adam(self.model, config.lr, config.beta1, config.beta2, config.eps)
        self.rng = make_rng(config.seed, stream=1)
        self.schedule = config.schedule_config()
        self.loss_config = config.loss_config()
        self.coords = signal.coords.astype(self.model.dtype)
        self.selector = None
        self.truth_laplacian = None
        if config.strategy == "evos":
            self.selector = EvolutionarySelector(config.selector_config(), signal, self.rng)
            if self.loss_config.lambda_high > 0:
                self.truth_laplacian = laplacian(signal.attrs, signal.grid,
                                                 config.laplacian_kernel)

    def sizes(self, t: int) -> tuple[int, int]:
        """Selection size ``q`` and survivor count ``k`` at iteration ``t``."""
        cfg = self.config
        if cfg.strategy == "standard":
            return self.n, self.n
        q = selection_size(self.schedule, t, self.n)
        if cfg.strategy == "uniform" or not cfg.use_mutation:
            return q, q
        return q, survivor_count(q, cfg.alpha)

    def warmup(self) -> None:
        """Untimed forward/backward at the first step's batch size; no update, no RNG."""
        q, _ = self.sizes(1)
        pred, trace = self.model.forward(self.coords[:q], keep_trace=True)
        self.model.backward(trace, np.zeros_like(pred))

    def step(self, t: int) -> StepResult:
        cfg = self.config
        clock = time.perf_counter
        timings = dict.fromkeys(PHASES, 0.0)
        if cfg.lr_schedule == "cosine":
            self.adam.lr = cfg.lr * 0.5 * (1.0 + math.cos(math.pi * (t - 1) / cfg.iters))
        q, k = self.sizes(t)
        gamma = 0

        start = clock()
        if cfg.strategy == "standard":
            z = None
        elif cfg.strategy == "uniform":
            z = uniform_subset(self.n, q, self.rng)
        else:
            state = self.selector.select(self.model, t, k)
            z, gamma = state.subset, state.gamma
            timings["refresh"] = self.selector.refresh_seconds
        timings["select"] = clock() - start - timings["refresh"]

        start = clock()
        coords = self.coords if z is None else self.coords[z]
        pred, trace = self.model.forward(coords, keep_trace=True)
        if cfg.strategy == "evos":
            report, grad = cross_frequency_loss(pred, z, self.selector.cache, self.signal,
                                                self.loss_config, self.truth_laplacian)
        else:
            target = self.signal.attrs if z is None else self.signal.attrs[z]
            low, grad = mse_loss(pred, target, self.loss_config.reduction)
            report = LossReport(low, low, 0.0)
        timings["forward"] = clock() - start
        if not math.isfinite(report.total):
            raise TrainingAborted(f"non-finite loss {report.total} at iteration {t}")

        start = clock()
        grads = self.model.backward(trace, grad)
        timings["backward"] = clock() - start

        start = clock()
        self.adam.step(self.model, grads)
        timings["optimizer"] = clock() - start
        return StepResult(t, report, q, len(z) if z is not None else k, gamma, timings)

    def predict(self) -> np.ndarray:
        return self.model.predict(self.coords)

    def evaluate(self, t: int, elapsed: float) -> QualitySnapshot:
        pred = self.predict()
        err = mse(pred, self.signal.attrs)
        s = ssim(pred, self.signal.attrs, self.signal.grid) if self.signal.grid.rank == 2 \
            else math.nan
        return QualitySnapshot(t, elapsed, psnr_from_mse(err), s, err)


@dataclass
class RunRecord:
    config: ExperimentConfig
    rows: list[dict] = field(default_factory=list)
    snapshots: list[QualitySnapshot] = field(default_factory=list)
    phase_totals: dict[str, float] = field(default_factory=lambda: dict.fromkeys(PHASES, 0.0))
    total_seconds: float = 0.0
    refresh_count: int = 0
    final: Optional[QualitySnapshot] = None
    crossings: dict[float, Optional[tuple[int, float]]] = field(default_factory=dict)
    aborted: Optional[str] = None
    paths: dict[str, str] = field(default_factory=dict)
    iterations: int = 0

    @property
    def seconds_per_iteration(self) -> float:
        return self.total_seconds / max(self.iterations, 1)

    @property
    def selection_fraction(self) -> float:
        """Selector time (excluding cache refresh) as a share of training time."""
        return self.phase_totals["select"] / self.total_seconds if self.total_seconds else 0.0

    def snapshot_at(self, t: int) -> Optional[QualitySnapshot]:
        for snap in self.snapshots:
            if snap.iteration == t:
                return snap
        if self.final is not None and self.final.iteration == t:
            return self.final
        return None

    def psnr_at(self, t: int) -> float:
        snap = self.snapshot_at(t)
        return snap.psnr if snap is not None else math.nan

    def losses(self) -> np.ndarray:
        return np.array([r["loss_total"] for r in self.rows])

    def summary(self) -> dict:
        return {
            "label": self.config.name,
            "strategy": self.config.strategy,
            "signal": self.config.signal,
            "iterations": self.iterations,
            "total_seconds": self.total_seconds,
            "seconds_per_iteration": self.seconds_per_iteration,
            "phase_seconds": self.phase_totals,
            "selection_fraction": self.selection_fraction,
            "refresh_count": self.refresh_count,
            "final": None if self.final is None else vars(self.final),
            "snapshots": [vars(s) for s in self.snapshots],
            "crossings": {str(k): v for k, v in self.crossings.items()},
            "aborted": self.aborted,
            "paths": self.paths,
        }

    @classmethod
    def from_summary(cls, config: ExperimentConfig, summary: dict) -> "RunRecord":
        """Rebuild a record (minus per-iteration rows) from :meth:`summary` output."""
        rec = cls(config)
        rec.snapshots = [_snapshot(s) for s in summary["snapshots"]]
        rec.phase_totals = dict(summary["phase_seconds"])
        rec.total_seconds = summary["total_seconds"]
        rec.refresh_count = summary["refresh_count"]
        rec.final = _snapshot(summary["final"]) if summary["final"] else None
        rec.crossings = {float(k): tuple(v) if v else None
                         for k, v in summary["crossings"].items()}
        rec.aborted = summary["aborted"]
        rec.paths = dict(summary["paths"])
        rec.iterations = summary["iterations"]
        return rec

    def write_csv(self, target) -> None:
        """Per-iteration CSV to a path or an open text stream."""
        if hasattr(target, "write"):
            self._write_rows(target)
        else:
            with open(target, "w", newline="") as fh:
                self._write_rows(fh)

    def _write_rows(self, fh) -> None:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(row[k]) for k in CSV_COLUMNS})


def _snapshot(data: dict) -> QualitySnapshot:
    # non-finite values may arrive as strings ("inf", "nan") from JSON
    return QualitySnapshot(int(data["iteration"]), float(data["elapsed_seconds"]),
                           float(data["psnr"]), float(data["ssim"]), float(data["mse"]))


def _fmt(value):
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return value


def run_experiment(config: ExperimentConfig, signal: Signal | None = None,
                   progress: Callable[[int, int], None] | None = None) -> RunRecord:
    """Train for ``config.iters`` steps and export artifacts to ``output_dir``.

    Non-finite losses abort the run; the partial record is still returned
    and flushed with ``aborted`` set.
    """
    if signal is None:
        signal = load_signal(config)
    trainer = Trainer(config, signal)
    record = RunRecord(config)
    record.crossings = {float(p): None for p in config.psnr_targets}
    if config.warmup:
        trainer.warmup()

    elapsed = 0.0
    try:
        for t in range(1, config.iters + 1):
            res = trainer.step(t)
            elapsed += res.seconds
            for phase, secs in res.timings.items():
                record.phase_totals[phase] += secs
            row = {
                "t": t, "elapsed_s": elapsed, "loss_total": res.loss.total,
                "loss_low": res.loss.low, "loss_high": res.loss.high,
                "psnr": math.nan, "ssim": math.nan, "q": res.q, "k": res.k,
                "gamma": res.gamma,
                "select_ms": 1e3 * res.timings["select"],
                "fwd_ms": 1e3 * res.timings["forward"],
                "bwd_ms": 1e3 * res.timings["backward"],
                "opt_ms": 1e3 * res.timings["optimizer"],
            }
            if t % config.eval_every == 0:
                snap = trainer.evaluate(t, elapsed)
                record.snapshots.append(snap)
                row["psnr"], row["ssim"] = snap.psnr, snap.ssim
                for target, hit in record.crossings.items():
                    if hit is None and snap.psnr >= target:
                        record.crossings[target] = (t, elapsed)
            record.rows.append(row)
            record.iterations = t
            if progress is not None:
                progress(t, config.iters)
    except (TrainingAborted, FloatingPointError) as exc:
        record.aborted = str(exc)
        log.error("run %s aborted: %s", config.name, exc)
    record.total_seconds = elapsed
    if trainer.selector is not None:
        record.refresh_count = trainer.selector.refresh_count
    if record.aborted is None:
        record.final = trainer.evaluate(record.iterations, elapsed)
    if config.output_dir:
        _export(record, trainer)
    return record


def _export(record: RunRecord, trainer: Trainer) -> None:
    out = Path(record.config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "run.csv"
    record.write_csv(csv_path)
    record.paths["csv"] = str(csv_path)
    (out / "config.txt").write_text(dump_config(record.config))
    if record.aborted is None:
        rate = trainer.signal.sample_rate or record.config.sample_rate or 16000
        recon = save_reconstruction(out / "reconstruction", trainer.signal, trainer.predict(),
                                    sample_rate=rate)
        record.paths["reconstruction"] = str(recon)
        record.paths["checkpoint"] = str(save_checkpoint(out / "model.ckpt", trainer.model))
    (out / "summary.json").write_text(json.dumps(record.summary(), indent=2, default=_json))
    record.paths["summary"] = str(out / "summary.json")


def _json(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"cannot serialize {type(value)}")


def evaluate_checkpoint(checkpoint, signal: Signal, output=None) -> dict:
    """Full-grid metrics of a saved model; optionally writes the reconstruction."""
    model = load_checkpoint(checkpoint)
    expected = (signal.grid.rank, signal.grid.channels)
    if (model.config.input_dim, model.config.output_dim) != expected:
        raise ValueError(f"checkpoint maps {model.config.input_dim}->{model.config.output_dim}"
                         f" but the signal needs {expected[0]}->{expected[1]}")
    pred = model.predict(signal.coords)
    err = mse(pred, signal.attrs)
    result = {
        "psnr": psnr_from_mse(err),
        "ssim": ssim(pred, signal.attrs, signal.grid) if signal.grid.rank == 2 else None,
        "mse": err,
        "reconstruction": None,
    }
    if output is not None:
        path = save_reconstruction(output, signal, pred, sample_rate=signal.sample_rate or 16000)
        result["reconstruction"] = str(path)
    return result
