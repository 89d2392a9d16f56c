"""Binary vector file writer and reader.

Interchange format shared with the graph engine: 8-byte magic ``VSEMVEC1``,
little-endian header ``<u32 version=1, u32 dim, u64 count, u8 metric,
u8 normalized>`` (metric 0 = cosine, 1 = dot), then one record per vector:
``<u16 id byte length, id utf-8, dim * f32>``.
"""

import struct

import numpy as np

MAGIC = b"VSEMVEC1"
VERSION = 1
METRICS = {"cosine": 0, "dot": 1}
_HEADER = struct.Struct("<IIQBB")


class VecFileError(Exception):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


def write_vector_file(
    path: str,
    dim: int,
    entries: list[tuple[str, np.ndarray]],
    metric: str = "cosine",
    normalized: bool = True,
) -> None:
    """Write entries in list order; ids must be unique and non-empty."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {sorted(METRICS)}")
    seen = set()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(VERSION, dim, len(entries), METRICS[metric], int(normalized)))
        for entry_id, values in entries:
            if not entry_id or entry_id in seen:
                raise ValueError(f"vector ids must be unique and non-empty, got {entry_id!r}")
            seen.add(entry_id)
            raw_id = entry_id.encode("utf-8")
            if len(raw_id) > 0xFFFF:
                raise ValueError(f"vector id too long: {entry_id[:40]!r}...")
            vec = np.asarray(values, dtype="<f4")
            if vec.shape != (dim,):
                raise ValueError(f"vector {entry_id!r} has shape {vec.shape}, want ({dim},)")
            fh.write(struct.pack("<H", len(raw_id)))
            fh.write(raw_id)
            fh.write(vec.tobytes())


def read_vector_file(path: str):
    """Read a vector file back; returns (dim, metric, normalized, entries)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise VecFileError(path, "bad magic")
    if len(blob) < 8 + _HEADER.size:
        raise VecFileError(path, "truncated header")
    version, dim, count, metric_code, norm_flag = _HEADER.unpack_from(blob, 8)
    if version != VERSION:
        raise VecFileError(path, f"unsupported version {version}")
    codes = {code: name for name, code in METRICS.items()}
    if metric_code not in codes:
        raise VecFileError(path, f"unknown metric code {metric_code}")
    offset = 8 + _HEADER.size
    entries = []
    for _ in range(count):
        if offset + 2 > len(blob):
            raise VecFileError(path, "truncated record header")
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        end = offset + id_len + dim * 4
        if end > len(blob):
            raise VecFileError(path, "truncated record payload")
        entry_id = blob[offset : offset + id_len].decode("utf-8")
        vec = np.frombuffer(blob[offset + id_len : end], dtype="<f4").copy()
        entries.append((entry_id, vec))
        offset = end
    if offset != len(blob):
        raise VecFileError(path, f"{len(blob) - offset} trailing bytes")
    return dim, codes[metric_code], bool(norm_flag), entries
