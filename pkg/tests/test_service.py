import time

import pytest
from fastapi.testclient import TestClient

from evos_inr.client import ServiceClient
from evos_inr.config import ExperimentConfig
from evos_inr.service import create_app


@pytest.fixture
def client():
    with TestClient(create_app()) as c:
        yield c


def tiny_config(path, **over):
    cfg = dict(signal=str(path), iters=4, eval_every=2, hidden_layers=1, hidden_width=8, tau=2)
    cfg.update(over)
    return ExperimentConfig(**cfg)


def wait(client, job_id):
    for _ in range(600):
        status = client.get(f"/runs/{job_id}").json()
        if status["state"] in ("done", "aborted", "failed"):
            return status
        time.sleep(0.05)
    raise AssertionError("job did not finish")


def test_health(client):
    assert client.get("/health").json() == {"status": "ok", "queued": 0, "running": 0}


def test_run_lifecycle(client, small_image_path):
    body = {"config": tiny_config(small_image_path).model_dump(mode="json")}
    resp = client.post("/runs", json=body)
    assert resp.status_code == 202
    job = resp.json()
    assert job["total"] == 4 and job["label"] == "evos"
    status = wait(client, job["id"])
    assert status["state"] == "done" and status["iteration"] == 4
    summary = client.get(f"/runs/{job['id']}/summary").json()
    assert summary["iterations"] == 4 and len(summary["snapshots"]) == 2
    csv_text = client.get(f"/runs/{job['id']}/csv").text
    assert csv_text.splitlines()[0].startswith("t,elapsed_s,loss_total")
    assert len(csv_text.strip().splitlines()) == 5
    assert [r["id"] for r in client.get("/runs").json()] == [job["id"]]


def test_errors(client, tmp_path, small_image_path):
    assert client.get("/runs/missing").status_code == 404
    assert client.get("/runs/missing/summary").status_code == 404
    bad = {"config": tiny_config(tmp_path / "nope.png").model_dump(mode="json")}
    assert client.post("/runs", json=bad).status_code == 422
    invalid = {"config": {"signal": str(small_image_path), "tau": 0}}
    assert client.post("/runs", json=invalid).status_code == 422
    extra = {"config": {"signal": str(small_image_path), "colour": "red"}}
    assert client.post("/runs", json=extra).status_code == 422


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_aborted_run_reported(client, small_image_path):
    cfg = tiny_config(small_image_path, strategy="standard", lr=1e30, iters=40)
    job = client.post("/runs", json={"config": cfg.model_dump(mode="json")}).json()
    status = wait(client, job["id"])
    assert status["state"] == "aborted" and "non-finite" in status["error"]
    summary = client.get(f"/runs/{job['id']}/summary").json()
    assert summary["final"] is None


def test_client_roundtrip_and_eval(client, small_image_path, tmp_path):
    sc = ServiceClient("http://testserver", poll=0.05, http=client)
    cfg = tiny_config(small_image_path, output_dir=str(tmp_path / "out"))
    (record,) = sc.run([cfg])
    assert record.iterations == 4 and record.final is not None
    assert record.psnr_at(4) == record.final.psnr
    result = sc.evaluate(record.paths["checkpoint"], str(small_image_path),
                         str(tmp_path / "recon"))
    assert result["psnr"] == pytest.approx(record.final.psnr, rel=1e-6)
    assert result["reconstruction"].endswith(".png")
    with pytest.raises(RuntimeError, match="422"):
        sc.evaluate(str(tmp_path / "none.ckpt"), str(small_image_path))
