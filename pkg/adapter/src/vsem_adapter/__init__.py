"""Embedding adapter: stdio JSON-lines serving plus bulk vector-file export."""

from .encoders import AdapterConfig, AdapterError, HashEncoder, load_encoders
from .manifest import BatchResult, batch_embed_file
from .protocol import serve_stdio
from .vecfile import VecFileError, read_vector_file, write_vector_file

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "BatchResult",
    "HashEncoder",
    "VecFileError",
    "batch_embed_file",
    "load_encoders",
    "read_vector_file",
    "serve_stdio",
    "write_vector_file",
]
