"""HTTP service running training jobs in the background.

Jobs execute one at a time on a worker thread (numpy releases the GIL in
the heavy kernels, so the API stays responsive). Run ``evos serve`` or
``uvicorn evos_inr.service.app:app``.
"""

from __future__ import annotations

import io
import math
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from ..signal import SignalError, load_audio, load_image
from ..trainer import RunRecord, evaluate_checkpoint, load_signal, run_experiment
from .schemas import EvalRequest, EvalResponse, Health, RunRequest, RunStatus


class JobManager:
    def __init__(self, workers: int = 1):
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="evos-run")
        self._lock = threading.Lock()
        self._jobs: dict[str, RunStatus] = {}
        self._records: dict[str, RunRecord] = {}

    def submit(self, request: RunRequest) -> RunStatus:
        job_id = uuid.uuid4().hex[:12]
        cfg = request.config
        status = RunStatus(id=job_id, label=cfg.name, state="queued", total=cfg.iters)
        with self._lock:
            self._jobs[job_id] = status
        self._pool.submit(self._run, job_id, request)
        return status

    def _update(self, job_id: str, **fields) -> None:
        with self._lock:
            self._jobs[job_id] = self._jobs[job_id].model_copy(update=fields)

    def _run(self, job_id: str, request: RunRequest) -> None:
        self._update(job_id, state="running")
        try:
            record = run_experiment(request.config,
                                    progress=lambda t, _: self._update(job_id, iteration=t))
        except Exception as exc:  # reported through the status endpoint
            self._update(job_id, state="failed", error=f"{type(exc).__name__}: {exc}")
            return
        with self._lock:
            self._records[job_id] = record
        if record.aborted:
            self._update(job_id, state="aborted", error=record.aborted)
        else:
            self._update(job_id, state="done")

    def status(self, job_id: str) -> RunStatus:
        with self._lock:
            if job_id not in self._jobs:
                raise KeyError(job_id)
            return self._jobs[job_id]

    def all(self) -> list[RunStatus]:
        with self._lock:
            return list(self._jobs.values())

    def record(self, job_id: str) -> RunRecord:
        self.status(job_id)
        with self._lock:
            if job_id not in self._records:
                raise LookupError(job_id)
            return self._records[job_id]

    def shutdown(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)


def json_safe(value):
    """Replace non-finite floats with their string names, recursively."""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def create_app(workers: int = 1) -> FastAPI:
    jobs = JobManager(workers)

    @asynccontextmanager
    async def lifespan(_app):
        yield
        jobs.shutdown()

    app = FastAPI(title="evos-inr", lifespan=lifespan,
                  description="Coordinate-MLP training with evolutionary coordinate selection")
    app.state.jobs = jobs

    def _lookup(job_id: str) -> RunStatus:
        try:
            return jobs.status(job_id)
        except KeyError:
            raise HTTPException(404, f"no run {job_id}") from None

    def _record(job_id: str) -> RunRecord:
        _lookup(job_id)
        try:
            return jobs.record(job_id)
        except LookupError:
            raise HTTPException(409, f"run {job_id} has not finished") from None

    @app.get("/health", response_model=Health)
    def health():
        states = [s.state for s in jobs.all()]
        return Health(queued=states.count("queued"), running=states.count("running"))

    @app.post("/runs", response_model=RunStatus, status_code=202)
    def submit(request: RunRequest):
        if not request.config.signal:
            raise HTTPException(422, "config.signal must name a signal file")
        try:
            load_signal(request.config)
        except (SignalError, OSError) as exc:
            raise HTTPException(422, str(exc)) from None
        return jobs.submit(request)

    @app.get("/runs", response_model=list[RunStatus])
    def list_runs():
        return jobs.all()

    @app.get("/runs/{job_id}", response_model=RunStatus)
    def run_status(job_id: str):
        return _lookup(job_id)

    @app.get("/runs/{job_id}/summary")
    def run_summary(job_id: str):
        return json_safe(_record(job_id).summary())

    @app.get("/runs/{job_id}/csv", response_class=PlainTextResponse)
    def run_csv(job_id: str):
        record = _record(job_id)
        buf = io.StringIO()
        record.write_csv(buf)
        return buf.getvalue()

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(request: EvalRequest):
        try:
            if request.signal.lower().endswith(".wav"):
                signal = load_audio(request.signal, request.audio_seconds)
            else:
                signal = load_image(request.signal, request.center_crop)
            result = evaluate_checkpoint(request.checkpoint, signal, request.output)
        except (SignalError, OSError, ValueError) as exc:
            raise HTTPException(422, str(exc)) from None
        if not math.isfinite(result["psnr"]):
            result["psnr"] = None
        return result

    return app


app = create_app()
