"""Knowledge-source backends for the expansion pipeline.

``DictSource`` serves records straight from memory and is the workhorse for
tests. ``FileSource`` reads the same shape from a directory of JSON-lines
files, one record per line:

    nodes.jsonl      {"id", "source_ids"}
    glosses.jsonl    {"node", "lang", "text"}
    images.jsonl     {"node", "locator", "data_b64"}
    relations.jsonl  {"head", "label", "tail"}

Unknown node references in the auxiliary files are format errors.
"""

from __future__ import annotations

import base64
import binascii
import json
import os

from .errors import FormatError, SourceError
from .pipeline import KnowledgeSource, SourceImage, SourceNode

_FILES = ("nodes.jsonl", "glosses.jsonl", "images.jsonl", "relations.jsonl")


class DictSource(KnowledgeSource):
    """Serves a fixed mapping of node id -> SourceNode."""

    def __init__(self, records: dict[str, SourceNode]):
        for node_id, record in records.items():
            if node_id != record.id:
                raise ValueError(f"key {node_id!r} does not match record id {record.id!r}")
        self._records = dict(records)

    def exists(self, node_id: str) -> bool:
        return node_id in self._records

    def fetch(self, node_id: str) -> SourceNode:
        try:
            return self._records[node_id]
        except KeyError:
            raise SourceError(node_id, "no such node") from None


class FileSource(KnowledgeSource):
    """Loads a JSONL directory into memory once and serves from it."""

    def __init__(self, directory: str):
        self._records = _load_directory(directory)

    def exists(self, node_id: str) -> bool:
        return node_id in self._records

    def fetch(self, node_id: str) -> SourceNode:
        try:
            return self._records[node_id]
        except KeyError:
            raise SourceError(node_id, "no such node") from None


def _rows(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(row, dict):
                raise FormatError(path, lineno, "row is not an object")
            yield lineno, row


def _need(row: dict, key: str, path: str, lineno: int) -> object:
    if key not in row:
        raise FormatError(path, lineno, f"missing key {key!r}")
    return row[key]


def _load_directory(directory: str) -> dict[str, SourceNode]:
    for name in _FILES:
        if not os.path.isfile(os.path.join(directory, name)):
            raise FormatError(os.path.join(directory, name), None, "file not found")

    records: dict[str, SourceNode] = {}
    path = os.path.join(directory, "nodes.jsonl")
    for lineno, row in _rows(path):
        node_id = _need(row, "id", path, lineno)
        if not isinstance(node_id, str) or not node_id:
            raise FormatError(path, lineno, "id must be a non-empty string")
        if node_id in records:
            raise FormatError(path, lineno, f"duplicate node id {node_id!r}")
        source_ids = row.get("source_ids", [])
        if not isinstance(source_ids, list) or not all(isinstance(s, str) for s in source_ids):
            raise FormatError(path, lineno, "source_ids must be a list of strings")
        records[node_id] = SourceNode(id=node_id, source_ids=list(source_ids))

    def resolve(node_ref: object, path: str, lineno: int) -> SourceNode:
        if not isinstance(node_ref, str):
            raise FormatError(path, lineno, "node reference must be a string")
        record = records.get(node_ref)
        if record is None:
            raise FormatError(path, lineno, f"unknown node {node_ref!r}")
        return record

    path = os.path.join(directory, "glosses.jsonl")
    for lineno, row in _rows(path):
        record = resolve(_need(row, "node", path, lineno), path, lineno)
        lang = _need(row, "lang", path, lineno)
        text = _need(row, "text", path, lineno)
        if not isinstance(lang, str) or not isinstance(text, str):
            raise FormatError(path, lineno, "lang and text must be strings")
        record.glosses.append((lang, text))

    path = os.path.join(directory, "images.jsonl")
    for lineno, row in _rows(path):
        record = resolve(_need(row, "node", path, lineno), path, lineno)
        locator = _need(row, "locator", path, lineno)
        data_b64 = _need(row, "data_b64", path, lineno)
        if not isinstance(locator, str) or not isinstance(data_b64, str):
            raise FormatError(path, lineno, "locator and data_b64 must be strings")
        try:
            data = base64.b64decode(data_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise FormatError(path, lineno, f"invalid base64: {exc}") from exc
        record.images.append(SourceImage(locator=locator, data=data))

    path = os.path.join(directory, "relations.jsonl")
    for lineno, row in _rows(path):
        record = resolve(_need(row, "head", path, lineno), path, lineno)
        label = _need(row, "label", path, lineno)
        tail = _need(row, "tail", path, lineno)
        if not isinstance(label, str) or not isinstance(tail, str):
            raise FormatError(path, lineno, "label and tail must be strings")
        record.relations.append((label, tail))

    return records


def write_source(directory: str, records: dict[str, SourceNode]) -> None:
    """Serialize records to the JSONL directory layout FileSource reads."""
    os.makedirs(directory, exist_ok=True)
    dump = lambda obj: json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    with open(os.path.join(directory, "nodes.jsonl"), "w", encoding="utf-8") as fh:
        for node_id in sorted(records):
            fh.write(dump({"id": node_id, "source_ids": records[node_id].source_ids}) + "\n")
    with open(os.path.join(directory, "glosses.jsonl"), "w", encoding="utf-8") as fh:
        for node_id in sorted(records):
            for lang, text in records[node_id].glosses:
                fh.write(dump({"node": node_id, "lang": lang, "text": text}) + "\n")
    with open(os.path.join(directory, "images.jsonl"), "w", encoding="utf-8") as fh:
        for node_id in sorted(records):
            for img in records[node_id].images:
                fh.write(
                    dump(
                        {
                            "node": node_id,
                            "locator": img.locator,
                            "data_b64": base64.b64encode(img.data).decode("ascii"),
                        }
                    )
                    + "\n"
                )
    with open(os.path.join(directory, "relations.jsonl"), "w", encoding="utf-8") as fh:
        for node_id in sorted(records):
            for label, tail in records[node_id].relations:
                fh.write(dump({"head": node_id, "label": label, "tail": tail}) + "\n")
