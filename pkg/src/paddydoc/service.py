"""HTTP prediction service consumed by the operator console.

One process serves one exported artifact. Responses are pure functions of
(artifact, catalog, request bytes) apart from latency fields; every JSON
body carries schema_version 1 and every non-2xx body carries a
machine-readable error code.
"""

from __future__ import annotations

import base64
import datetime as _dt
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, UploadFile, File
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .advice import load_catalog, recommend
from .errors import ConfigurationError, ImageDecodeError
from .inference import load_artifact, DEFAULT_CONFIDENCE_FLOOR

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class ServiceConfig:
    artifact_path: str
    catalog_path: Optional[str] = None
    host: str = "127.0.0.1"
    port: int = 8000
    max_upload_bytes: int = 10 * 1024 * 1024
    frame_rate_limit_per_s: float = 1.0
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR
    log_path: Optional[str] = "predictions.log"

    def __post_init__(self):
        if not (1 <= self.port <= 65535):
            raise ConfigurationError("port must be in [1, 65535]")
        if self.max_upload_bytes <= 0:
            raise ConfigurationError("max_upload_bytes must be > 0")
        if self.frame_rate_limit_per_s <= 0:
            raise ConfigurationError("frame_rate_limit_per_s must be > 0")


class _TokenBucket:
    """Per-client token bucket for the frame endpoint."""

    def __init__(self, rate_per_s: float):
        self.rate = rate_per_s
        self.capacity = max(1.0, rate_per_s)
        self._buckets: dict = {}
        self._lock = threading.Lock()

    def allow(self, key: str) -> bool:
        now = time.monotonic()
        with self._lock:
            tokens, stamp = self._buckets.get(key, (self.capacity, now))
            tokens = min(self.capacity, tokens + (now - stamp) * self.rate)
            if tokens >= 1.0:
                self._buckets[key] = (tokens - 1.0, now)
                return True
            self._buckets[key] = (tokens, now)
            return False


class _FramePayload(BaseModel):
    frame_base64: str


def _error_response(status: int, code: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"schema_version": SCHEMA_VERSION, "error": code}
    )


def create_app(config: ServiceConfig) -> FastAPI:
    """Build the service application; fails fast if the artifact or the
    recommendation catalog cannot be loaded."""
    predictor = load_artifact(config.artifact_path, confidence_floor=config.confidence_floor)
    catalog = load_catalog(config.catalog_path)
    bucket = _TokenBucket(config.frame_rate_limit_per_s)
    app = FastAPI(title="paddydoc prediction service")

    log_file = Path(config.log_path) if config.log_path else None

    def log_request(label: str, confidence: float) -> None:
        if log_file is None:
            return
        try:
            with open(log_file, "a", encoding="utf-8") as fh:
                stamp = _dt.datetime.now(_dt.timezone.utc).isoformat()
                fh.write(f"{stamp}\t{label}\t{confidence:.6f}\n")
        except OSError:  # logging must never fail a request
            logger.exception("failed to append prediction log")

    def predict_response(image_bytes: bytes) -> JSONResponse:
        if len(image_bytes) > config.max_upload_bytes:
            return _error_response(413, "payload_too_large")
        try:
            prediction = predictor.predict(image_bytes)
        except ImageDecodeError:
            return _error_response(422, "decode_failed")
        advice = recommend(prediction.label, catalog)
        log_request(prediction.label, prediction.top1_confidence)
        return JSONResponse(
            {
                "schema_version": SCHEMA_VERSION,
                "label": prediction.label,
                "class_index": prediction.class_index,
                "probabilities": {
                    name: prediction.probabilities[idx]
                    for name, idx in predictor.class_map.items()
                },
                "uncertain": prediction.uncertain,
                "recommendation": advice.to_dict(),
                "model": {
                    "backbone_name": predictor.metadata["backbone_name"],
                    "val_accuracy": predictor.metadata["metrics"].get("val_accuracy"),
                },
                "latency_ms": prediction.latency_ms,
            }
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _error_response(422, "invalid_request")

    @app.get("/health")
    def health():
        return {"schema_version": SCHEMA_VERSION, "status": "ok"}

    @app.get("/model")
    def model_metadata():
        return dict(predictor.metadata)

    @app.get("/classes")
    def classes():
        return {"schema_version": SCHEMA_VERSION, "classes": dict(predictor.class_map)}

    @app.get("/recommendations/{class_name}")
    def recommendation(class_name: str):
        if class_name not in predictor.class_map:
            return _error_response(404, "unknown_class")
        return {
            "schema_version": SCHEMA_VERSION,
            **recommend(class_name, catalog).to_dict(),
        }

    @app.post("/predict")
    async def predict_upload(image: UploadFile = File(...)):
        return predict_response(await image.read())

    @app.post("/predict-frame")
    async def predict_frame(payload: _FramePayload, request: Request):
        client = request.client.host if request.client else "unknown"
        if not bucket.allow(client):
            return _error_response(429, "rate_limited")
        try:
            frame_bytes = base64.b64decode(payload.frame_base64, validate=True)
        except Exception:
            return _error_response(422, "decode_failed")
        return predict_response(frame_bytes)

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
