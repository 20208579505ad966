"""Minimal HTTP client for a running ``evos serve`` instance."""

from __future__ import annotations

import time

import httpx

from .config import ExperimentConfig
from .trainer import RunRecord

FINISHED = ("done", "aborted", "failed")


class ServiceClient:
    def __init__(self, base_url: str, timeout: float = 30.0, poll: float = 1.0,
                 http: httpx.Client | None = None):
        self.http = http or httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout)
        self.poll = poll

    def _check(self, resp: httpx.Response) -> dict:
        if resp.status_code >= 400:
            detail = resp.json().get("detail", resp.text) if resp.content else resp.text
            raise RuntimeError(f"service error {resp.status_code}: {detail}")
        return resp.json()

    def submit(self, config: ExperimentConfig) -> str:
        body = {"config": config.model_dump(mode="json")}
        return self._check(self.http.post("/runs", json=body))["id"]

    def status(self, job_id: str) -> dict:
        return self._check(self.http.get(f"/runs/{job_id}"))

    def wait(self, job_id: str) -> dict:
        while True:
            status = self.status(job_id)
            if status["state"] in FINISHED:
                return status
            time.sleep(self.poll)

    def record(self, job_id: str, config: ExperimentConfig) -> RunRecord:
        summary = self._check(self.http.get(f"/runs/{job_id}/summary"))
        return RunRecord.from_summary(config, summary)

    def run(self, configs: list[ExperimentConfig]) -> list[RunRecord]:
        """Submit every config, wait for all, and return records in order."""
        ids = [self.submit(cfg) for cfg in configs]
        records = []
        for job_id, cfg in zip(ids, configs):
            status = self.wait(job_id)
            if status["state"] == "failed":
                raise RuntimeError(f"run {cfg.name} failed: {status['error']}")
            records.append(self.record(job_id, cfg))
        return records

    def evaluate(self, checkpoint: str, signal: str, output: str | None = None) -> dict:
        body = {"checkpoint": checkpoint, "signal": signal, "output": output}
        return self._check(self.http.post("/eval", json=body))
