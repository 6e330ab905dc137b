"""HTTP service exposing listening sessions to the web console.

JSON bodies everywhere except the waveform endpoints, which return raw
16-bit little-endian PCM with a JSON sidecar. Mutating routes are
serialized per session; frame advances refuse to queue and answer 409
while a frame is already processing.
"""

from __future__ import annotations

import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .gpc import optimize_hyperparams
from .session import ENVIRONMENTS, Session, SessionConfig, SessionError

SAMPLE_RATE = 8000
WAVEFORM_KINDS = ("input", "speech", "noise", "output")
EFE_RESOLUTION_RANGE = (5, 101)


@dataclass(frozen=True)
class ApiConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    data_dir: Path = Path("./aida-sessions")
    static_dir: Optional[Path] = None

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValueError("port must lie in [1, 65535]")


@dataclass
class SessionHandle:
    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    wave_scale: Optional[float] = None


class SessionManager:
    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.handles: dict[str, SessionHandle] = {}
        self._create_lock = threading.Lock()

    def create(self, environment: str, seed: int) -> str:
        config = SessionConfig(environment=environment, seed=seed, sample_rate=SAMPLE_RATE)
        with self._create_lock:
            session_id = uuid.uuid4().hex[:12]
            log_path = self.data_dir / f"{session_id}.jsonl"
            self.handles[session_id] = SessionHandle(Session(config, log_path=log_path))
        return session_id

    def get(self, session_id: str) -> SessionHandle:
        handle = self.handles.get(session_id)
        if handle is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return handle

    def close_all(self):
        for handle in self.handles.values():
            handle.session.close()


class CreateSessionBody(BaseModel):
    environment: str = "synthetic"
    seed: int = 0


class AppraisalBody(BaseModel):
    r: int


def _frame_payload(session_id: str, session: Session) -> dict:
    result = session.last_result
    return {
        "frame_index": result.frame_index,
        "map_index": result.map_index,
        "belief": result.belief.tolist(),
        "bfe": [None if not np.isfinite(v) else float(v) for v in result.bfe_scores],
        "model_names": [m.name for m in session.bank.models],
        "gains": result.gains.tolist(),
        "degraded": result.degraded,
        "waveforms": {
            kind: f"/sessions/{session_id}/waveforms/{kind}" for kind in WAVEFORM_KINDS
        },
    }


def _pcm_encode(samples: np.ndarray, scale: float) -> bytes:
    clipped = np.clip(samples * scale, -1.0, 1.0)
    return (clipped * 32767.0).astype("<i2").tobytes()


def create_app(config: ApiConfig | None = None) -> FastAPI:
    config = config or ApiConfig()
    app = FastAPI(title="aida console service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    manager = SessionManager(config.data_dir)
    app.state.manager = manager

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        if body.environment not in ENVIRONMENTS:
            raise HTTPException(
                status_code=400,
                detail={"code": "unknown_environment", "known": list(ENVIRONMENTS)},
            )
        session_id = manager.create(body.environment, body.seed)
        return {"session_id": session_id}

    @app.get("/sessions/{session_id}")
    def session_state(session_id: str):
        handle = manager.get(session_id)
        session = handle.session
        return {
            "frame_index": session.frame_index,
            "environment": session.config.environment,
            "map_index": session.map_index,
            "belief": session.belief.probs.tolist(),
            "model_names": [m.name for m in session.bank.models],
            "gains": [c.gains.tolist() for c in session.contexts],
            "appraisals": [c.appraisal_count for c in session.contexts],
        }

    @app.post("/sessions/{session_id}/next")
    def next_frame(session_id: str):
        handle = manager.get(session_id)
        if not handle.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="frame already processing")
        try:
            session = handle.session
            session.process_next_frame()
            if handle.wave_scale is None:
                rms = float(np.sqrt(np.mean(session.last_result.x**2)))
                handle.wave_scale = 0.2 / max(rms, 1e-6)
            return _frame_payload(session_id, session)
        finally:
            handle.lock.release()

    @app.post("/sessions/{session_id}/appraisal")
    def appraisal(session_id: str, body: AppraisalBody):
        handle = manager.get(session_id)
        if body.r not in (0, 1):
            raise HTTPException(status_code=422, detail="appraisal must be 0 or 1")
        with handle.lock:
            try:
                proposal = handle.session.handle_appraisal(body.r)
            except SessionError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
        return {"proposal": proposal.tolist()}

    @app.post("/sessions/{session_id}/optimize")
    def optimize(session_id: str):
        handle = manager.get(session_id)
        with handle.lock:
            session = handle.session
            if session.last_result is None:
                raise HTTPException(status_code=409, detail="no frame processed yet")
            ctx = session.contexts[session.last_result.map_index]
            if not ctx.dataset.has_both_classes:
                raise HTTPException(
                    status_code=409,
                    detail="dataset holds a single appraisal class; "
                    "evidence optimization would degenerate",
                )
            ctx.params = optimize_hyperparams(ctx.dataset, ctx.params)
            session.log.append(
                "hyperparam_update",
                {
                    "context": session.last_result.map_index,
                    "sigma": ctx.params.sigma,
                    "length": ctx.params.length,
                },
            )
            return {"sigma": ctx.params.sigma, "l": ctx.params.length}

    @app.get("/sessions/{session_id}/efe")
    def efe(session_id: str, resolution: int = 21):
        handle = manager.get(session_id)
        resolution = min(max(resolution, EFE_RESOLUTION_RANGE[0]), EFE_RESOLUTION_RANGE[1])
        with handle.lock:
            return handle.session.efe_snapshot(resolution)

    @app.get("/sessions/{session_id}/bfe")
    def bfe(session_id: str):
        handle = manager.get(session_id)
        session = handle.session
        if session.last_result is None:
            raise HTTPException(status_code=409, detail="no frame processed yet")
        return {
            "bfe": [
                None if not np.isfinite(v) else float(v)
                for v in session.last_result.bfe_scores
            ],
            "model_names": [m.name for m in session.bank.models],
            "map_index": session.last_result.map_index,
        }

    def _waveform_samples(session: Session, kind: str) -> np.ndarray:
        if session.last_result is None:
            raise HTTPException(status_code=409, detail="no frame processed yet")
        result = session.last_result
        if kind == "input":
            return result.x
        if kind == "speech":
            return result.speech_means
        if kind == "noise":
            return result.noise_means
        if kind == "output":
            return result.output
        raise HTTPException(status_code=404, detail="unknown waveform kind")

    @app.get("/sessions/{session_id}/waveforms/{kind}")
    def waveform(session_id: str, kind: str):
        handle = manager.get(session_id)
        samples = _waveform_samples(handle.session, kind)
        scale = handle.wave_scale or 1.0
        return Response(
            content=_pcm_encode(samples, scale),
            media_type="application/octet-stream",
            headers={
                "X-Sample-Rate": str(SAMPLE_RATE),
                "X-Length": str(samples.shape[0]),
            },
        )

    @app.get("/sessions/{session_id}/waveforms/{kind}/meta")
    def waveform_meta(session_id: str, kind: str):
        handle = manager.get(session_id)
        samples = _waveform_samples(handle.session, kind)
        return {
            "sample_rate": SAMPLE_RATE,
            "length": int(samples.shape[0]),
            "kind": kind,
            "encoding": "pcm16-le",
        }

    static_dir = config.static_dir
    if static_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static_dir = bundled if bundled.is_dir() else None
    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app


def default_config_from_env() -> ApiConfig:
    return ApiConfig(
        port=int(os.environ.get("AIDA_PORT", "8000")),
        data_dir=Path(os.environ.get("AIDA_DATA_DIR", "./aida-sessions")),
    )
