"""FastAPI application. Artifacts load in a background thread; until then
every endpoint except ``/health`` answers 503."""

from __future__ import annotations

import functools
import gc
import logging
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import ValidationError
from starlette.concurrency import run_in_threadpool

from ..config import Config
from ..pipeline import BadRequest, Engine, UnknownFile
from .schemas import ClusterSummary, Health, PredictRequest, PredictResponse

log = logging.getLogger(__name__)

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


class _State:
    def __init__(self) -> None:
        self.engine: Engine | None = None
        self.error: str | None = None
        self.ready = threading.Event()


def _error(status: int, kind: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": kind, "detail": detail})


def _freeze_heap() -> None:
    # The loaded corpus is long-lived and read-only; keeping it out of the cyclic
    # collector's generations stops full collections from stalling requests.
    gc.collect()
    gc.freeze()


def create_app(
    corpus_dir: str | Path | None = None,
    cfg: Config | None = None,
    engine: Engine | None = None,
    background: bool = True,
) -> FastAPI:
    """Build the app around ``engine``, or load one from ``corpus_dir``."""
    app = FastAPI(title="levelscope", version="0.1.0")
    state = _State()
    app.state.levelscope = state

    def load() -> None:
        try:
            state.engine = Engine.load(corpus_dir, cfg)
            _freeze_heap()
        except Exception as exc:  # surfaced through /health
            log.exception("artifact load failed")
            state.error = f"{type(exc).__name__}: {exc}"
        finally:
            state.ready.set()

    if engine is not None:
        state.engine = engine
        _freeze_heap()
        state.ready.set()
    elif corpus_dir is None:
        raise ValueError("create_app needs corpus_dir or engine")
    elif background:
        threading.Thread(target=load, name="levelscope-load", daemon=True).start()
    else:
        load()

    @app.exception_handler(RequestValidationError)
    async def _invalid(_request: Request, exc: RequestValidationError):
        return _error(400, "bad_request", str(exc.errors()))

    def _engine() -> Engine | JSONResponse:
        if state.engine is None:
            why = state.error or "index is still loading"
            return _error(503, "unavailable", why)
        return state.engine

    @app.get("/health", response_model=Health)
    def health():
        if state.engine is not None:
            return Health(status="ok", corpus_hash=state.engine.corpus_hash)
        if state.error:
            return JSONResponse(status_code=503, content={"status": "error", "corpus_hash": None})
        return JSONResponse(status_code=503, content={"status": "loading", "corpus_hash": None})

    @app.post("/predict", response_model=PredictResponse, openapi_extra={"requestBody": {
        "required": True, "content": {"application/json": {"schema": PredictRequest.model_json_schema()}}}})
    async def predict(request: Request):
        # hand-parsed hot path: FastAPI's dependency solving costs more than retrieval itself
        eng = _engine()
        if isinstance(eng, JSONResponse):
            return eng
        try:
            body = PredictRequest.model_validate_json(await request.body())
        except ValidationError as exc:
            return _error(400, "bad_request", str(exc.errors(include_url=False)))
        flag = request.query_params.get("fallback", "true").lower()
        if flag not in _BOOL:
            return _error(400, "bad_request", f"fallback must be true or false, got {flag!r}")
        call = functools.partial(eng.predict, body.file, body.line, body.message, body.context, body.mode,
                                 body.k, allow_fallback=_BOOL[flag])
        try:
            # retrieval is sub-millisecond CPU work; only network-bound clients go to the thread pool
            out = await run_in_threadpool(call) if getattr(eng.client, "blocking_io", True) else call()
        except UnknownFile as exc:
            return _error(404, "unknown_file", str(exc))
        except BadRequest as exc:
            return _error(400, "bad_request", str(exc))
        return JSONResponse(out)

    @app.get("/clusters/{mode}", response_model=ClusterSummary)
    def clusters(mode: str):
        eng = _engine()
        if isinstance(eng, JSONResponse):
            return eng
        try:
            return eng.cluster_summary(mode)
        except UnknownFile as exc:
            return _error(404, "unknown_mode", str(exc))

    return app
