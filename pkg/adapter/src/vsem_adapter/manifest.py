"""Bulk embedding: JSONL manifest in, binary vector file out.

Manifest rows use the request schema of the serving protocol, one object
per line. Rows that fail land in a ``<output>.errors.jsonl`` sidecar
with their line number; the vector file holds every row that succeeded, in
manifest order.
"""

import json
import os
from dataclasses import dataclass

from .encoders import AdapterConfig, load_encoders
from .protocol import Request, RequestError, parse_request, unit_vector
from .vecfile import write_vector_file


@dataclass(frozen=True)
class BatchResult:
    written: int
    errored: int
    dim: int
    sidecar_path: str | None


def _encode_kind(encoder, kind: str, rows: list[Request], batch_size: int):
    vectors = []
    for start in range(0, len(rows), batch_size):
        chunk = rows[start : start + batch_size]
        if kind == "text":
            vectors.extend(encoder.encode_texts([(r.payload, r.lang) for r in chunk]))
        else:
            vectors.extend(encoder.encode_images([r.payload for r in chunk]))
    return vectors


def batch_embed_file(
    manifest_path: str, output_path: str, config: AdapterConfig | None = None
) -> BatchResult:
    """Embed every manifest row; fatal only when the output is unwritable."""
    config = config or AdapterConfig()
    text_enc, image_enc, dim = load_encoders(config)

    accepted: list[tuple[int, Request]] = []
    errors: list[dict] = []
    seen_ids: set[str] = set()
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rid = None
            try:
                obj = json.loads(line)
                if isinstance(obj, dict) and isinstance(obj.get("id"), str):
                    rid = obj["id"]
                request = parse_request(obj)
            except json.JSONDecodeError:
                errors.append({"line": lineno, "id": None, "error": "parse"})
                continue
            except RequestError as exc:
                errors.append({"line": lineno, "id": rid, "error": str(exc)})
                continue
            if request.id in seen_ids:
                errors.append({"line": lineno, "id": request.id, "error": "duplicate id"})
                continue
            seen_ids.add(request.id)
            accepted.append((lineno, request))

    by_kind = {"text": [], "image": []}
    for slot, (_lineno, request) in enumerate(accepted):
        by_kind[request.kind].append((slot, request))
    vectors: dict[int, list[float]] = {}
    for kind, encoder in (("text", text_enc), ("image", image_enc)):
        slotted = by_kind[kind]
        raw = _encode_kind(encoder, kind, [r for _, r in slotted], config.batch_size)
        for (slot, request), vec in zip(slotted, raw):
            try:
                vectors[slot] = unit_vector(vec)
            except RequestError as exc:
                lineno = accepted[slot][0]
                errors.append({"line": lineno, "id": request.id, "error": str(exc)})

    entries = [
        (request.id, vectors[slot])
        for slot, (_lineno, request) in enumerate(accepted)
        if slot in vectors
    ]
    write_vector_file(output_path, dim, entries, metric="cosine", normalized=True)

    sidecar = output_path + ".errors.jsonl"
    if errors:
        errors.sort(key=lambda row: row["line"])
        with open(sidecar, "w", encoding="utf-8") as fh:
            for row in errors:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    else:
        try:
            os.remove(sidecar)  # stale log from a previous run
        except FileNotFoundError:
            pass
        sidecar = None
    return BatchResult(
        written=len(entries), errored=len(errors), dim=dim, sidecar_path=sidecar
    )
