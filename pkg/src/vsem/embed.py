"""Embedding providers, similarity kernels, and the binary vector format.

Vectors are stored as 32-bit IEEE-754 little-endian floats; similarity is
accumulated in 64-bit regardless of storage width so rankings stay stable
near ties.
"""

from __future__ import annotations

import base64
import hashlib
import json
import queue
import shlex
import struct
import subprocess
import threading
import time
from abc import ABC, abstractmethod
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    DimensionMismatch,
    FormatError,
    ProtocolError,
    ProviderCrash,
    ProviderError,
    ProviderTimeout,
    ZeroVector,
)

STORAGE_DTYPE = np.dtype("<f4")

_MAGIC = b"VSEMVEC1"
_VERSION = 1
_METRIC_CODES = {"cosine": 0, "dot": 1}
_METRIC_NAMES = {code: name for name, code in _METRIC_CODES.items()}

UNIT_NORM_TOL = 1e-4


def as_vector(values, dim: int | None = None) -> np.ndarray:
    """Coerce to a finite 1-D float32 vector, checking dim when given."""
    vec = np.asarray(values, dtype=STORAGE_DTYPE)
    if vec.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {vec.shape}")
    if vec.size == 0:
        raise ValueError("vector must be non-empty")
    if not np.all(np.isfinite(vec)):
        raise ValueError("vector contains NaN or Inf")
    if dim is not None and vec.size != dim:
        raise DimensionMismatch(dim, vec.size)
    return vec


def dot(u, v) -> float:
    """Plain dot product with float64 accumulation."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise DimensionMismatch(u.size, v.size)
    return float(np.dot(u.astype(np.float64), v.astype(np.float64)))


def cosine(u, v) -> float:
    """Cosine similarity in [-1, 1], clamped against rounding."""
    u = np.asarray(u).astype(np.float64)
    v = np.asarray(v).astype(np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(u.size, v.size)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector()
    value = float(np.dot(u, v)) / (nu * nv)
    return max(-1.0, min(1.0, value))


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    if norm == 0.0:
        raise ZeroVector()
    return (vec.astype(np.float64) / norm).astype(STORAGE_DTYPE)


class EmbeddingProvider(ABC):
    """Bi-modal encoder: text and image inputs map into one vector space.

    Implementations must be deterministic (equal input, equal output) and
    must produce vectors of a single declared dimension for both modalities.
    """

    dim: int
    normalized: bool

    @abstractmethod
    def embed_text(self, text: str, lang: str | None = None) -> np.ndarray: ...

    @abstractmethod
    def embed_image(self, data: bytes) -> np.ndarray: ...

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _hash_unit_vector(seed: bytes, dim: int) -> np.ndarray:
    # SHAKE-256 expands the seed to dim u32 words; fixed little-endian
    # interpretation keeps the result identical across platforms.
    raw = hashlib.shake_256(seed).digest(dim * 4)
    words = np.frombuffer(raw, dtype="<u4").astype(np.float64)
    vec = words / np.float64(2**32 - 1) * 2.0 - 1.0
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec = np.zeros(dim)
        vec[0] = 1.0
        return vec.astype(STORAGE_DTYPE)
    return (vec / norm).astype(STORAGE_DTYPE)


class HashProvider(EmbeddingProvider):
    """Deterministic provider backed by a lookup table with a hash fallback.

    Known inputs return their table vector; unknown inputs return a unit
    vector expanded from a cryptographic hash of the payload. Text and image
    payloads hash in separate namespaces.
    """

    def __init__(self, dim: int, table: Mapping[str | bytes, object] | None = None,
                 normalized: bool = False):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.normalized = normalized
        self._table: dict[str | bytes, np.ndarray] = {}
        for key, value in (table or {}).items():
            self._table[key] = as_vector(value, dim)

    def embed_text(self, text: str, lang: str | None = None) -> np.ndarray:
        hit = self._table.get(text)
        if hit is not None:
            return hit
        return _hash_unit_vector(b"text\x00" + text.encode("utf-8"), self.dim)

    def embed_image(self, data: bytes) -> np.ndarray:
        hit = self._table.get(data)
        if hit is not None:
            return hit
        return _hash_unit_vector(b"image\x00" + data, self.dim)


def mock_provider(table: Mapping[str | bytes, object], dim: int) -> HashProvider:
    """Table-backed deterministic provider for tests and offline runs."""
    return HashProvider(dim=dim, table=table)


class ExternalProvider(EmbeddingProvider):
    """Provider backed by a subprocess speaking the JSON-lines protocol.

    One request object per line on stdin; responses matched by id on stdout
    and may arrive out of order. The subprocess may open with a handshake
    line ``{"hello": {"dim": D, "normalized": true}}``.
    """

    def __init__(self, command: str | list[str], timeout: float = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.dim: int | None = None
        self.normalized = False
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._pending: dict[str, dict] = {}
        self._next_id = 0
        self._lock = threading.Lock()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def _next_message(self, deadline: float) -> dict:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise ProviderTimeout(f"no response within {self.timeout}s")
        try:
            line = self._lines.get(timeout=remaining)
        except queue.Empty:
            raise ProviderTimeout(f"no response within {self.timeout}s") from None
        if line is None:
            code = self._proc.poll()
            raise ProviderCrash(f"provider exited (code {code}) with requests outstanding")
        line = line.strip()
        if not line:
            return self._next_message(deadline)
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable provider line: {line[:200]!r}") from exc
        if not isinstance(msg, dict):
            raise ProtocolError(f"provider line is not an object: {line[:200]!r}")
        return msg

    def _consume_hello(self, msg: dict) -> bool:
        # The handshake is optional and may arrive at any point before the
        # first response; only the first one fixes dim.
        hello = msg.get("hello")
        if not isinstance(hello, dict):
            return False
        dim = hello.get("dim")
        if isinstance(dim, int) and dim > 0 and self.dim is None:
            self.dim = dim
        self.normalized = bool(hello.get("normalized", False))
        return True

    def _request(self, payload: dict) -> np.ndarray:
        with self._lock:
            req_id = str(self._next_id)
            self._next_id += 1
            payload = {"id": req_id, **payload}
            if self._proc.poll() is not None:
                raise ProviderCrash(f"provider exited (code {self._proc.poll()})")
            assert self._proc.stdin is not None
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ProviderCrash("provider stdin closed") from exc
            deadline = time.monotonic() + self.timeout
            while True:
                msg = self._pending.pop(req_id, None)
                if msg is None:
                    msg = self._next_message(deadline)
                    if self._consume_hello(msg):
                        continue
                    if "id" not in msg:
                        raise ProtocolError(f"response without id: {msg!r}")
                    got = str(msg["id"])
                    if got != req_id:
                        self._pending[got] = msg
                        continue
                if "error" in msg:
                    raise ProviderError(str(msg["error"]))
                if "vector" not in msg:
                    raise ProtocolError(f"response without vector or error: {msg!r}")
                vec = as_vector(msg["vector"], self.dim)
                if self.dim is None:
                    self.dim = vec.size
                return vec

    def embed_text(self, text: str, lang: str | None = None) -> np.ndarray:
        body: dict = {"kind": "text", "payload": text}
        if lang is not None:
            body["lang"] = lang
        return self._request(body)

    def embed_image(self, data: bytes) -> np.ndarray:
        return self._request(
            {"kind": "image", "payload_b64": base64.b64encode(data).decode("ascii")}
        )

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin is not None:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()


class VectorStore:
    """Immutable-after-load map of string ids to fixed-dimension vectors."""

    def __init__(self, dim: int, metric: str = "cosine", normalized: bool = False):
        if dim <= 0:
            raise ValueError("dim must be positive")
        if metric not in _METRIC_CODES:
            raise ValueError(f"metric must be one of {sorted(_METRIC_CODES)}")
        self.dim = dim
        self.metric = metric
        self.normalized = normalized
        self._entries: dict[str, np.ndarray] = {}

    def add(self, entry_id: str, values) -> None:
        if not entry_id:
            raise ValueError("entry id must be non-empty")
        if entry_id in self._entries:
            raise ValueError(f"duplicate vector id: {entry_id!r}")
        vec = as_vector(values, self.dim)
        if self.normalized:
            norm = float(np.linalg.norm(vec.astype(np.float64)))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise ValueError(f"vector {entry_id!r} is not unit-norm (|x|={norm:.6f})")
        self._entries[entry_id] = vec

    def get(self, entry_id: str) -> np.ndarray:
        return self._entries[entry_id]

    def ids(self) -> list[str]:
        return list(self._entries)

    def items(self) -> Iterable[tuple[str, np.ndarray]]:
        return self._entries.items()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._entries


def write_vectors(store: VectorStore, path: str) -> None:
    """Write the binary vector file; layout documented in the README."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(
            struct.pack(
                "<IIQBB",
                _VERSION,
                store.dim,
                len(store),
                _METRIC_CODES[store.metric],
                1 if store.normalized else 0,
            )
        )
        for entry_id, vec in store.items():
            raw_id = entry_id.encode("utf-8")
            if len(raw_id) > 0xFFFF:
                raise ValueError(f"vector id too long: {entry_id[:40]!r}...")
            fh.write(struct.pack("<H", len(raw_id)))
            fh.write(raw_id)
            fh.write(np.ascontiguousarray(vec, dtype=STORAGE_DTYPE).tobytes())


def read_vectors(path: str) -> VectorStore:
    """Read a binary vector file back, bit-exactly."""

    def fail(reason: str):
        raise FormatError(path, None, reason)

    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            fail(f"bad magic {magic!r}")
        header = fh.read(18)
        if len(header) != 18:
            fail("truncated header")
        version, dim, count, metric_code, norm_flag = struct.unpack("<IIQBB", header)
        if version != _VERSION:
            fail(f"unsupported version {version}")
        if metric_code not in _METRIC_NAMES:
            fail(f"unknown metric code {metric_code}")
        if dim <= 0:
            fail(f"non-positive dim {dim}")
        store = VectorStore(
            dim=dim, metric=_METRIC_NAMES[metric_code], normalized=bool(norm_flag)
        )
        vec_bytes = dim * 4
        for i in range(count):
            len_raw = fh.read(2)
            if len(len_raw) != 2:
                fail(f"truncated id length for record {i}")
            (id_len,) = struct.unpack("<H", len_raw)
            raw_id = fh.read(id_len)
            if len(raw_id) != id_len:
                fail(f"truncated id for record {i}")
            raw_vec = fh.read(vec_bytes)
            if len(raw_vec) != vec_bytes:
                fail(f"truncated vector for record {i}")
            try:
                entry_id = raw_id.decode("utf-8")
            except UnicodeDecodeError:
                fail(f"record {i} id is not UTF-8")
            vec = np.frombuffer(raw_vec, dtype=STORAGE_DTYPE).copy()
            try:
                store.add(entry_id, vec)
            except ValueError as exc:
                fail(f"record {i}: {exc}")
        trailing = fh.read(1)
        if trailing:
            fail("trailing bytes after last record")
    return store
