"""Request and response models for the training service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel

from ..config import ExperimentConfig

JobState = Literal["queued", "running", "done", "aborted", "failed"]


class RunRequest(BaseModel):
    config: ExperimentConfig


class RunStatus(BaseModel):
    id: str
    label: str
    state: JobState
    iteration: int = 0
    total: int
    error: Optional[str] = None


class EvalRequest(BaseModel):
    checkpoint: str
    signal: str
    center_crop: Optional[tuple[int, int]] = None
    audio_seconds: Optional[float] = None
    output: Optional[str] = None


class EvalResponse(BaseModel):
    # null when the reconstruction is exact (infinite PSNR)
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    mse: float
    reconstruction: Optional[str] = None


class Health(BaseModel):
    status: str = "ok"
    queued: int = 0
    running: int = 0
