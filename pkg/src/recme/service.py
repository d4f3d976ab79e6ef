"""Local HTTP service: enrollment, identification, training control, and
metrics for the web console and scripts.

Single process, trusted localhost tool. Identification reads an immutable
model snapshot; enrollment and the one background training job serialize
behind a writer lock; finishing a training job persists the checkpoint
and swaps the served model atomically (one reference assignment), so
requests always see either the old or the new model, never a mixture.
"""

from __future__ import annotations

import base64
import binascii
import dataclasses
import threading
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .audio_io import decode_wav, preprocess
from .checkpoint import load_checkpoint, save_checkpoint, state_to_bytes
from .dataset import EmptyDataset, build_dataset, speaker_order, split
from .identification import (
    DuplicateName,
    EnrollmentRequest,
    TooShort,
    enroll,
    identify,
)
from .model import new_state
from .train import TrainingConfig, export_metrics, fit

DEFAULT_PORT = 7878
MAX_WAV_BYTES = 64 * 1024 * 1024
MODEL_FILE = "model.rsid"

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(TrainingConfig)}


class EnrollBody(BaseModel):
    name: str
    wav_base64: str


class IdentifyBody(BaseModel):
    wav_base64: str
    threshold: float | None = None


class TrainBody(BaseModel):
    seed: int | None = None
    batch_size: int | None = None
    max_epochs: int | None = None
    patience: int | None = None
    noise_scale: float | None = None
    split_ratio: float | None = None
    dropout_rate: float | None = None
    optimizer: str | None = None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "message": message})


class Service:
    """Mutable state behind the endpoints."""

    def __init__(self, data_dir, model_path=None, config: TrainingConfig | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.model_path = Path(model_path) if model_path else self.data_dir / MODEL_FILE
        self.base_config = config or TrainingConfig()
        self.lock = threading.Lock()  # serializes enrollment and job startup
        self.model = None
        self.metrics: list | None = None
        self.histograms: list | None = None
        self.job: dict = {"state": "idle", "job_id": 0, "current_epoch": 0,
                          "best_val_acc": None, "started_at": None,
                          "finished_at": None, "error": None}
        if self.model_path.exists():
            self.model = load_checkpoint(self.model_path)

    def speakers_view(self) -> list[dict]:
        rows = []
        for index, name in enumerate(speaker_order(self.data_dir)):
            clips = 0
            for wav_path in sorted((self.data_dir / name).glob("*.wav")):
                try:
                    wave = decode_wav(wav_path.read_bytes())
                except ValueError:
                    continue
                clips += len(preprocess(wave))
            rows.append({"class_index": index, "name": name, "num_clips": clips})
        return rows

    def decode_body_wav(self, wav_base64: str):
        if len(wav_base64) * 3 // 4 > MAX_WAV_BYTES:
            raise ValueError(f"payload exceeds {MAX_WAV_BYTES} bytes")
        return decode_wav(base64.b64decode(wav_base64, validate=True))

    def run_training(self, config: TrainingConfig, job_id: int) -> None:
        try:
            index = build_dataset(self.data_dir)
            train_set, val_set = split(index, config.split_ratio, config.seed)
            state = new_state(index.registry, seed=config.seed,
                              dropout_rate=config.dropout_rate)

            def on_epoch(m):
                self.job.update(current_epoch=m.epoch)
                best = self.job["best_val_acc"]
                if best is None or m.val_acc > best:
                    self.job["best_val_acc"] = m.val_acc

            result = fit(state, train_set, val_set, config, on_epoch=on_epoch)
            save_checkpoint(result.state, self.model_path)
            export_metrics(result.metrics, result.histograms, self.data_dir)
            with self.lock:
                self.model = result.state
                self.metrics = result.metrics
                self.histograms = result.histograms
            self.job.update(state="done", finished_at=_now(),
                            best_val_acc=result.best_val_acc)
        except Exception as exc:  # surfaced via /train/status
            self.job.update(state="failed", error=f"{type(exc).__name__}: {exc}",
                            finished_at=_now())


def create_app(data_dir, model_path=None, config: TrainingConfig | None = None,
               static_dir=None) -> FastAPI:
    service = Service(data_dir, model_path, config)
    app = FastAPI(title="recme", docs_url=None, redoc_url=None)
    app.state.service = service
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model_loaded": service.model is not None,
            "num_speakers": len(speaker_order(service.data_dir)),
        }

    @app.get("/speakers")
    def speakers():
        return service.speakers_view()

    @app.post("/speakers", status_code=201)
    def add_speaker(body: EnrollBody):
        try:
            wave = service.decode_body_wav(body.wav_base64)
        except (ValueError, binascii.Error) as exc:
            return _error(400, "BadAudio", str(exc))
        try:
            with service.lock:
                result = enroll(service.data_dir, EnrollmentRequest(body.name, wave))
        except DuplicateName as exc:
            return _error(409, "DuplicateName", str(exc))
        except TooShort as exc:
            return _error(422, "TooShort", str(exc))
        except ValueError as exc:
            return _error(422, "InvalidName", str(exc))
        return {"class_index": result.class_index, "clips_added": result.clips_added,
                "retrain_needed": result.retrain_needed}

    @app.post("/identify")
    def identify_endpoint(body: IdentifyBody):
        model = service.model  # snapshot; a concurrent swap cannot tear it
        if model is None:
            return _error(409, "NoModel", "no model loaded; train first")
        try:
            wave = service.decode_body_wav(body.wav_base64)
        except (ValueError, binascii.Error) as exc:
            return _error(400, "BadAudio", str(exc))
        threshold = 0.5 if body.threshold is None else body.threshold
        try:
            result = identify(model, wave, threshold)
        except TooShort as exc:
            return _error(422, "TooShort", str(exc))
        return result.to_dict()

    @app.post("/train", status_code=202)
    def train_endpoint(body: TrainBody):
        overrides = {k: v for k, v in body.model_dump().items()
                     if v is not None and k in _CONFIG_FIELDS}
        config = dataclasses.replace(service.base_config, **overrides)
        if len(speaker_order(service.data_dir)) < 2:
            return _error(422, "TooFewSpeakers", "need at least 2 enrolled speakers")
        with service.lock:
            if service.job["state"] == "running":
                return _error(409, "JobRunning", "a training job is already running")
            job_id = service.job["job_id"] + 1
            service.job = {"state": "running", "job_id": job_id, "current_epoch": 0,
                           "best_val_acc": None, "started_at": _now(),
                           "finished_at": None, "error": None}
        thread = threading.Thread(
            target=service.run_training, args=(config, job_id), daemon=True
        )
        thread.start()
        return {"job_id": job_id}

    @app.get("/train/status")
    def train_status():
        return service.job

    @app.get("/metrics")
    def metrics():
        if not service.metrics:
            return _error(404, "NoMetrics", "no training history yet")
        return [dataclasses.asdict(m) for m in service.metrics]

    @app.get("/model")
    def model_bytes():
        model = service.model
        if model is None:
            return _error(404, "NoModel", "no model loaded")
        return Response(content=state_to_bytes(model),
                        media_type="application/octet-stream")

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app


def serve(data_dir, model_path=None, port: int = DEFAULT_PORT, static_dir=None) -> None:
    import uvicorn

    app = create_app(data_dir, model_path, static_dir=static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
