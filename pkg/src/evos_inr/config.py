"""Flat experiment configuration shared by the library, CLI and service.

Config files are plain ``key=value`` lines; ``#`` starts a comment. Every
key is a field of :class:`ExperimentConfig`.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, ValidationInfo, field_validator, model_validator

from .loss import LossConfig
from .mlp import MlpConfig
from .schedule import ScheduleConfig
from .selector import SelectorConfig


_OPTIONAL = {"center_crop", "audio_seconds", "sample_rate", "output_dir"}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    strategy: Literal["standard", "uniform", "evos"] = "evos"
    label: str = ""
    iters: int = 5000
    seed: int = 0
    eval_every: int = 50
    psnr_targets: tuple[float, ...] = (25.0, 30.0, 35.0)
    warmup: bool = True

    # signal source
    signal: str = ""
    center_crop: Optional[tuple[int, int]] = None
    audio_seconds: Optional[float] = None
    sample_rate: Optional[int] = None
    output_dir: Optional[str] = None

    # network
    backbone: Literal["siren", "pemlp"] = "siren"
    hidden_layers: int = 3
    hidden_width: int = 256
    omega_first: float = 30.0
    omega_hidden: float = 30.0
    pe_frequencies: int = 10

    # optimizer
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_schedule: Literal["none", "cosine"] = "none"

    # selection
    tau: float = 100.0
    theta: float = 0.01
    alpha: float = 0.5
    use_fitness_eval: bool = True
    use_crossover: bool = True
    use_mutation: bool = True
    interval_formula: Literal["relative", "absolute"] = "relative"

    # selection-size schedule
    schedule: Literal["constant", "stepwise", "linear", "cosine"] = "constant"
    beta: float = 0.5
    start_ratio: float = 0.2
    end_ratio: float = 1.0
    step_count: int = 5

    # loss
    lambda_low: float = 1.0
    lambda_high: float = 1e-5
    loss_reduction: Literal["mean", "sum"] = "mean"
    laplacian_kernel: int = 4

    @model_validator(mode="before")
    @classmethod
    def _none_strings(cls, data):
        if isinstance(data, dict):
            data = {k: None if k in _OPTIONAL and isinstance(v, str)
                    and v.strip().lower() in ("", "none") else v
                    for k, v in data.items()}
        return data

    @field_validator("psnr_targets", "center_crop", mode="before")
    @classmethod
    def _split_csv(cls, value, info: ValidationInfo):
        if value is None or (isinstance(value, str) and not value.strip()):
            return () if info.field_name == "psnr_targets" else None
        if isinstance(value, str):
            return tuple(p.strip() for p in value.replace("x", ",").split(",") if p.strip())
        return value

    @model_validator(mode="after")
    def _check(self):
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.laplacian_kernel not in (4, 8):
            raise ValueError("laplacian_kernel must be 4 or 8")
        # build sub-configs to surface their validation errors early
        self.selector_config()
        self.schedule_config()
        self.loss_config()
        return self

    @property
    def name(self) -> str:
        return self.label or self.strategy

    def mlp_config(self, input_dim: int, output_dim: int) -> MlpConfig:
        return MlpConfig(input_dim, output_dim, self.hidden_layers, self.hidden_width,
                         self.backbone, self.omega_first, self.omega_hidden,
                         self.pe_frequencies)

    def selector_config(self) -> SelectorConfig:
        return SelectorConfig(self.tau, self.theta, self.alpha, self.iters,
                              self.use_crossover, self.use_mutation, self.use_fitness_eval,
                              self.seed, self.interval_formula, self.laplacian_kernel)

    def schedule_config(self) -> ScheduleConfig:
        return ScheduleConfig(self.schedule, self.beta, self.start_ratio, self.end_ratio,
                              self.step_count, self.iters)

    def loss_config(self) -> LossConfig:
        return LossConfig(self.lambda_low, self.lambda_high, self.loss_reduction,
                          self.laplacian_kernel)


def parse_key_values(lines) -> dict[str, str]:
    """Parse ``key=value`` lines, ignoring blanks and ``#`` comments."""
    out = {}
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {num}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path=None, overrides=None, **defaults) -> ExperimentConfig:
    """Build a config from defaults, then a key=value file, then overrides."""
    values = dict(defaults)
    if path is not None:
        values.update(parse_key_values(Path(path).read_text().splitlines()))
    if overrides:
        values.update(overrides)
    return ExperimentConfig(**values)


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for key, value in config.model_dump().items():
        if value is None:
            value = "none"
        elif isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
