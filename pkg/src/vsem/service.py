"""Read-only HTTP retrieval service.

JSON in, JSON out, three resources: sentence retrieval, image retrieval,
node lookup. The service owns no mutable state; every response is
computed from an immutable index (plus an optional graph for node
detail), so identical requests always produce identical bodies.

Request bodies are parsed by hand rather than through framework
validation so malformed client input maps to 400 while provider-side
embedding failures map to 422.
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .errors import EmbeddingError, EmptyQuery, RetrievalError
from .images import validate_image_bytes
from .kg import KnowledgeGraph
from .retrieval import GlossIndex, retrieve_by_image, retrieve_by_sentence

MAX_K = 1000


@dataclass
class ServiceConfig:
    addr: str = "127.0.0.1:8591"
    max_body_bytes: int = 8 * 1024 * 1024
    request_timeout: float = 30.0
    max_concurrent: int = 8

    def __post_init__(self):
        if self.max_body_bytes <= 0:
            raise ValueError("max_body_bytes must be positive")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")
        if self.max_concurrent <= 0:
            raise ValueError("max_concurrent must be positive")


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def build_app(
    index: GlossIndex | None,
    graph: KnowledgeGraph | None = None,
    image_index: GlossIndex | None = None,
    config: ServiceConfig | None = None,
) -> FastAPI:
    """Assemble the app around already-loaded artifacts.

    ``index`` serves sentence queries. Image queries go to ``image_index``
    when given, else to ``index`` if it happens to be English-only.
    ``graph`` enables /node lookups. Passing index=None builds an app that
    answers 503 everywhere, standing in for a service mid-load.
    """
    config = config if config is not None else ServiceConfig()
    app = FastAPI(title="vsem", docs_url=None, redoc_url=None)
    gate = threading.Semaphore(config.max_concurrent)

    if image_index is None and index is not None and index.languages == frozenset({"en"}):
        image_index = index

    @app.middleware("http")
    async def cap_body(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None:
            try:
                if int(length) > config.max_body_bytes:
                    return _error(413, "request body too large")
            except ValueError:
                return _error(400, "bad Content-Length header")
        return await call_next(request)

    async def read_json_body(request: Request) -> tuple[dict | None, JSONResponse | None]:
        content_type = request.headers.get("content-type", "")
        if content_type.split(";")[0].strip().lower() != "application/json":
            return None, _error(415, "content-type must be application/json")
        body = await request.body()
        if len(body) > config.max_body_bytes:
            return None, _error(413, "request body too large")
        try:
            parsed = json.loads(body)
        except (json.JSONDecodeError, UnicodeDecodeError):
            return None, _error(400, "body is not valid JSON")
        if not isinstance(parsed, dict):
            return None, _error(400, "body must be a JSON object")
        return parsed, None

    def parse_k(payload: dict) -> tuple[int | None, JSONResponse | None]:
        k = payload.get("k", 10)
        if isinstance(k, bool) or not isinstance(k, int) or not 1 <= k <= MAX_K:
            return None, _error(400, f"k must be an integer in [1, {MAX_K}]")
        return k, None

    @app.get("/health")
    async def health():
        if index is None:
            return _error(503, "index loading")
        return {
            "status": "ok",
            "nodes": len(index.node_ids),
            "glosses": len(index),
        }

    @app.post("/retrieve/sentence")
    async def retrieve_sentence(request: Request):
        if index is None:
            return _error(503, "index loading")
        payload, err = await read_json_body(request)
        if err is not None:
            return err
        text = payload.get("text")
        if not isinstance(text, str) or not text.strip():
            return _error(400, "text must be a non-empty string")
        lang = payload.get("lang")
        if lang is not None and not isinstance(lang, str):
            return _error(400, "lang must be a string when given")
        k, err = parse_k(payload)
        if err is not None:
            return err

        def call():
            with gate:
                return retrieve_by_sentence(index, text, lang, k)

        try:
            result = await run_in_threadpool(call)
        except EmptyQuery:
            return _error(400, "text must be a non-empty string")
        except EmbeddingError as exc:
            return _error(422, f"provider failure: {exc}")
        return result.to_json()

    @app.post("/retrieve/image")
    async def retrieve_image(request: Request):
        if index is None:
            return _error(503, "index loading")
        payload, err = await read_json_body(request)
        if err is not None:
            return err
        encoded = payload.get("image_b64")
        if not isinstance(encoded, str) or not encoded:
            return _error(400, "image_b64 must be a non-empty string")
        try:
            data = base64.b64decode(encoded, validate=True)
        except (binascii.Error, ValueError):
            return _error(400, "image_b64 does not decode as base64")
        k, err = parse_k(payload)
        if err is not None:
            return err
        reason = validate_image_bytes(data)
        if reason is not None:
            return _error(415, f"unsupported image payload: {reason}")
        if image_index is None:
            return _error(503, "image retrieval not configured (needs an English-only index)")

        def call():
            with gate:
                return retrieve_by_image(image_index, data, k)

        try:
            result = await run_in_threadpool(call)
        except EmbeddingError as exc:
            return _error(422, f"provider failure: {exc}")
        except RetrievalError as exc:
            return _error(503, str(exc))
        return result.to_json()

    @app.get("/node/{node_id}")
    async def node_detail(node_id: str):
        if graph is None:
            return _error(503, "no graph loaded")
        node = graph.nodes.get(node_id)
        if node is None:
            return _error(404, f"unknown node: {node_id}")
        return {
            "id": node.id,
            "glosses": [
                {"lang": g.lang, "text": g.text}
                for g in sorted(node.glosses, key=lambda g: (g.lang, g.text))
            ],
            "images": sorted(img.content_hash for img in node.images),
            "neighbors": [
                {"relation": relation.value, "node": other}
                for relation, other in graph.neighbors(node_id)
            ],
        }

    return app
