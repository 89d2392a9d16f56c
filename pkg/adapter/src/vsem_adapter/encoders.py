"""Embedding backends the adapter can serve.

Model names resolve to one of three backends: ``hash:<dim>`` is a
deterministic offline stand-in, anything prefixed ``clip:`` loads an
image-text checkpoint, and any other name loads a sentence-transformers
checkpoint. The real backends need the ``models`` extra installed.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

DEFAULT_TEXT_MODEL = "paraphrase-multilingual-mpnet-base-v2"
DEFAULT_IMAGE_MODEL = "clip:RN50x16"

_U32_MAX = 2**32 - 1


class AdapterError(Exception):
    """Fatal adapter misconfiguration: bad spec, missing backend, dim clash."""


@dataclass(frozen=True)
class AdapterConfig:
    text_model: str = DEFAULT_TEXT_MODEL
    image_model: str = DEFAULT_IMAGE_MODEL
    device: str = "cpu"
    batch_size: int = 32

    def __post_init__(self):
        if self.batch_size < 1:
            raise AdapterError("batch_size must be >= 1")


class HashEncoder:
    """Deterministic stand-in encoder: SHAKE-256 expanded to the target dim.

    Text and image payloads hash in disjoint namespaces; the language tag is
    part of the text namespace so tagged requests stay reproducible.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise AdapterError("encoder dim must be >= 1")
        self.dim = dim

    def _expand(self, namespace: bytes, payload: bytes) -> np.ndarray:
        digest = hashlib.shake_256(namespace + payload).digest(self.dim * 4)
        words = struct.unpack(f"<{self.dim}I", digest)
        vec = np.array([w / _U32_MAX * 2.0 - 1.0 for w in words], dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return vec / norm

    def encode_texts(self, rows: list[tuple[str, str | None]]) -> list[np.ndarray]:
        return [
            self._expand(
                b"adapter/text/" + (lang or "").encode("utf-8") + b"\x00",
                text.encode("utf-8"),
            )
            for text, lang in rows
        ]

    def encode_images(self, blobs: list[bytes]) -> list[np.ndarray]:
        return [self._expand(b"adapter/image\x00", blob) for blob in blobs]


class SentenceTextEncoder:  # pragma: no cover - needs downloaded checkpoints
    """sentence-transformers backend for text requests."""

    def __init__(self, name: str, device: str, batch_size: int):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise AdapterError(
                f"model {name!r} needs sentence-transformers; "
                "install the 'models' extra"
            ) from exc
        self._model = SentenceTransformer(name, device=device)
        self._batch_size = batch_size
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode_texts(self, rows: list[tuple[str, str | None]]) -> list[np.ndarray]:
        # The checkpoint is language-agnostic; tags are accepted and ignored.
        out = self._model.encode(
            [text for text, _lang in rows],
            batch_size=self._batch_size,
            convert_to_numpy=True,
        )
        return [np.asarray(row, dtype=np.float64) for row in out]

    def encode_images(self, blobs: list[bytes]) -> list[np.ndarray]:
        raise AdapterError("text model cannot embed images")


class ClipEncoder:  # pragma: no cover - needs downloaded checkpoints
    """open-clip backend serving both modalities from one checkpoint."""

    def __init__(self, name: str, device: str, batch_size: int):
        try:
            import open_clip
            import torch
        except ImportError as exc:
            raise AdapterError(
                f"model {name!r} needs open-clip-torch; install the 'models' extra"
            ) from exc
        self._torch = torch
        self._open_clip = open_clip
        self._device = device
        self._batch_size = batch_size
        self._model, _, self._preprocess = open_clip.create_model_and_transforms(
            name, pretrained="openai", device=device
        )
        self._tokenizer = open_clip.get_tokenizer(name)
        self.dim = int(self._model.visual.output_dim)

    def encode_texts(self, rows: list[tuple[str, str | None]]) -> list[np.ndarray]:
        with self._torch.no_grad():
            tokens = self._tokenizer([text for text, _lang in rows]).to(self._device)
            out = self._model.encode_text(tokens).cpu().numpy()
        return [np.asarray(row, dtype=np.float64) for row in out]

    def encode_images(self, blobs: list[bytes]) -> list[np.ndarray]:
        import io

        from PIL import Image

        with self._torch.no_grad():
            batch = self._torch.stack(
                [self._preprocess(Image.open(io.BytesIO(blob)).convert("RGB")) for blob in blobs]
            ).to(self._device)
            out = self._model.encode_image(batch).cpu().numpy()
        return [np.asarray(row, dtype=np.float64) for row in out]


def _build(spec: str, config: AdapterConfig, for_images: bool):
    if spec.startswith("hash:"):
        raw = spec.partition(":")[2]
        try:
            dim = int(raw)
        except ValueError:
            raise AdapterError(f"bad hash encoder spec {spec!r}: dim must be an integer")
        return HashEncoder(dim)
    if spec.startswith("clip:"):
        return ClipEncoder(spec.partition(":")[2], config.device, config.batch_size)
    if for_images:
        raise AdapterError(
            f"image model {spec!r} not recognized; use 'clip:<name>' or 'hash:<dim>'"
        )
    return SentenceTextEncoder(spec, config.device, config.batch_size)


def load_encoders(config: AdapterConfig):
    """Build (text encoder, image encoder, shared dim); fatal on mismatch."""
    text_enc = _build(config.text_model, config, for_images=False)
    image_enc = (
        text_enc
        if config.image_model == config.text_model
        else _build(config.image_model, config, for_images=True)
    )
    if text_enc.dim != image_enc.dim:
        raise AdapterError(
            f"text and image encoders disagree on dim ({text_enc.dim} vs {image_enc.dim})"
        )
    return text_enc, image_enc, text_enc.dim
