"""Stdio JSON-lines serving loop.

One request object per input line, one response object per output line, in
input order. Responses carry either "vector" or "error" next to the echoed
request id. The loop answers malformed lines with an error and keeps going;
only startup failures terminate the process.
"""

import base64
import io
import json
import sys
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .encoders import AdapterConfig, load_encoders

KINDS = ("text", "image")


class RequestError(Exception):
    """A single bad request; reported on its response line, never fatal."""


@dataclass(frozen=True)
class Request:
    id: str
    kind: str
    payload: str | bytes
    lang: str | None = None


def parse_request(obj) -> Request:
    if not isinstance(obj, dict):
        raise RequestError("request must be a JSON object")
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise RequestError("request needs a non-empty string id")
    kind = obj.get("kind")
    if kind not in KINDS:
        raise RequestError(f"kind must be one of {list(KINDS)}")
    if kind == "text":
        payload = obj.get("payload")
        if not isinstance(payload, str):
            raise RequestError("text request needs a string payload")
        lang = obj.get("lang")
        if lang is not None and not isinstance(lang, str):
            raise RequestError("lang must be a string when present")
        return Request(id=rid, kind="text", payload=payload, lang=lang)
    encoded = obj.get("payload_b64")
    if not isinstance(encoded, str):
        raise RequestError("image request needs a payload_b64 string")
    try:
        data = base64.b64decode(encoded, validate=True)
    except (ValueError, TypeError):
        raise RequestError("payload_b64 is not valid base64")
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.verify()
    except (UnidentifiedImageError, OSError, SyntaxError):
        raise RequestError("payload is not a decodable image")
    return Request(id=rid, kind="image", payload=data)


def unit_vector(values) -> list[float]:
    """Normalize in float64, then round to the f32 the wire format carries."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    norm = float(np.linalg.norm(arr))
    if not np.isfinite(norm) or norm == 0.0:
        raise RequestError("encoder produced a non-normalizable vector")
    return [float(x) for x in (arr / norm).astype(np.float32)]


def _respond(line: str, text_enc, image_enc) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return {"id": None, "error": "parse"}
    rid = obj.get("id") if isinstance(obj, dict) else None
    if not isinstance(rid, str) or not rid:
        rid = None
    try:
        request = parse_request(obj)
        if request.kind == "text":
            raw = text_enc.encode_texts([(request.payload, request.lang)])[0]
        else:
            raw = image_enc.encode_images([request.payload])[0]
        return {"id": request.id, "vector": unit_vector(raw)}
    except RequestError as exc:
        return {"id": rid, "error": str(exc)}
    except Exception as exc:  # encoder bug: report, keep serving
        return {"id": rid, "error": f"embed failed: {exc}"}


def serve_stdio(config: AdapterConfig | None = None, stdin=None, stdout=None) -> int:
    """Serve requests until the input channel closes; returns 0."""
    config = config or AdapterConfig()
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    text_enc, image_enc, dim = load_encoders(config)
    _emit(stdout, {"hello": {"dim": dim, "normalized": True}})
    for line in stdin:
        if not line.strip():
            continue
        _emit(stdout, _respond(line, text_enc, image_enc))
    return 0


def _emit(stream, obj: dict) -> None:
    stream.write(json.dumps(obj, separators=(",", ":")) + "\n")
    stream.flush()
