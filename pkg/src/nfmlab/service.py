"""HTTP service around the experiment drivers.

Compute stays on a single worker thread draining a job queue; the HTTP
layer validates configs, enqueues jobs, and reports status.  Submitting
returns a job id immediately, progress is polled at /jobs/{id}, and the
result field carries a JSON summary once the job lands (artifacts
themselves stay on disk under the job's out_dir).
"""

from __future__ import annotations

import queue
import threading
import traceback
import uuid
from contextlib import asynccontextmanager
from typing import Literal

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import drivers
from .metrics import read_metrics
from .runconfig import RunConfig, build_config

JobKind = Literal["run", "fit", "diagnose", "compare", "sweep_n"]
JobState = Literal["queued", "running", "done", "error"]

DEFAULT_COMPARE_METHODS = ("nfm", "mcr", "bfecc", "sl")


class JobRequest(BaseModel):
    kind: JobKind
    config: dict[str, str | int | float | bool] = Field(default_factory=dict)
    methods: list[str] | None = None     # compare only
    n_values: list[int] | None = None    # sweep_n only


class JobStatus(BaseModel):
    id: str
    kind: JobKind
    state: JobState
    detail: str = ""
    result: dict | None = None


def _nan_to_none(v: float) -> float | None:
    return None if v != v else v


def _run_summary(res: drivers.RunResult) -> dict:
    last = read_metrics(res.metrics_path)[-1]
    return {"out_dir": str(res.out_dir),
            "metrics": str(res.metrics_path),
            "steps": last.step,
            "time": last.time,
            "kinetic_energy": last.kinetic_energy,
            "max_speed": last.max_speed,
            "rmse": _nan_to_none(last.rmse),
            "aepe": _nan_to_none(last.aepe),
            "wall_seconds": res.wall_seconds}


def _fit_summary(res: drivers.FitResult) -> dict:
    return {"out_dir": str(res.out_dir),
            "metrics": str(res.metrics_path),
            "sessions": [{"rmse": s.rmse, "aepe": s.aepe, "loss": s.loss,
                          "iters": s.iters, "rms_speed": s.rms_speed}
                         for s in res.sessions]}


def _diagnose_summary(res: drivers.DiagnoseResult) -> dict:
    return {"out_dir": str(res.out_dir),
            "csv": str(res.csv_path),
            "bidir_roundtrip": res.bidir_roundtrip,
            "bidir_jacobian": res.bidir_jacobian,
            "sl_roundtrip": res.sl_roundtrip,
            "sl_jacobian": res.sl_jacobian}


def _execute(req: JobRequest, cfg: RunConfig) -> dict:
    if req.kind == "run":
        return _run_summary(drivers.run(cfg))
    if req.kind == "fit":
        return _fit_summary(drivers.fit(cfg))
    if req.kind == "diagnose":
        return _diagnose_summary(drivers.diagnose(cfg))
    if req.kind == "compare":
        path = drivers.compare(cfg, methods=req.methods or DEFAULT_COMPARE_METHODS)
        return {"csv": str(path)}
    res = drivers.sweep_n(cfg, req.n_values or [])
    return {"csv": str(res.csv_path),
            "rows": [[r[0]] + [_nan_to_none(v) for v in r[1:]] for r in res.rows]}


class JobRunner:
    """Serializes job execution on one daemon thread."""

    def __init__(self):
        self._queue: queue.Queue = queue.Queue()
        self._jobs: dict[str, JobStatus] = {}
        self._requests: dict[str, tuple[JobRequest, RunConfig]] = {}
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._drain, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        if self._thread is not None:
            self._queue.put(None)
            self._thread.join(timeout=5.0)
            self._thread = None

    def submit(self, req: JobRequest, cfg: RunConfig) -> JobStatus:
        job = JobStatus(id=uuid.uuid4().hex, kind=req.kind, state="queued")
        with self._lock:
            self._jobs[job.id] = job
            self._requests[job.id] = (req, cfg)
        self._queue.put(job.id)
        return job

    def get(self, job_id: str) -> JobStatus | None:
        with self._lock:
            return self._jobs.get(job_id)

    def all(self) -> list[JobStatus]:
        with self._lock:
            return list(self._jobs.values())

    def _drain(self) -> None:
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            with self._lock:
                job = self._jobs[job_id]
                req, cfg = self._requests[job_id]
                job.state = "running"
            try:
                result = _execute(req, cfg)
            except Exception:
                with self._lock:
                    job.state = "error"
                    job.detail = traceback.format_exc(limit=8)
            else:
                with self._lock:
                    job.state = "done"
                    job.result = result


def create_app() -> FastAPI:
    runner = JobRunner()

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        runner.start()
        yield
        runner.stop()

    app = FastAPI(title="nfmlab", lifespan=lifespan)
    app.state.runner = runner

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/jobs", response_model=JobStatus, status_code=202)
    def submit(req: JobRequest) -> JobStatus:
        if req.kind == "sweep_n" and not req.n_values:
            raise HTTPException(422, "sweep_n needs a nonempty n_values list")
        try:
            cfg = build_config(**req.config)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from None
        return runner.submit(req, cfg)

    @app.get("/jobs", response_model=list[JobStatus])
    def all_jobs() -> list[JobStatus]:
        return runner.all()

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def one_job(job_id: str) -> JobStatus:
        job = runner.get(job_id)
        if job is None:
            raise HTTPException(404, f"no job {job_id}")
        return job

    return app
