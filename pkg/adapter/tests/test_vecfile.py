import random
import struct

import numpy as np
import pytest

from vsem_adapter.vecfile import (
    MAGIC,
    VecFileError,
    read_vector_file,
    write_vector_file,
)


def unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    vec = rng.normal(size=dim)
    return (vec / np.linalg.norm(vec)).astype("<f4")


class TestWriteRead:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        pyrng = random.Random(7)
        names = ["plain", "säule", "木", "id with spaces", "кот"]
        for trial in range(30):
            dim = pyrng.randint(1, 48)
            entries = [
                (f"{pyrng.choice(names)}/{trial}/{i}", unit(rng, dim))
                for i in range(pyrng.randint(0, 15))
            ]
            path = tmp_path / f"t{trial}.vec"
            write_vector_file(str(path), dim, entries, metric="cosine", normalized=True)
            got_dim, metric, normalized, got = read_vector_file(str(path))
            assert (got_dim, metric, normalized) == (dim, "cosine", True)
            assert [gid for gid, _ in got] == [gid for gid, _ in entries]
            for (_, want), (_, have) in zip(entries, got):
                assert want.tobytes() == have.tobytes()

    def test_header_layout(self, tmp_path):
        path = tmp_path / "h.vec"
        write_vector_file(
            str(path), 3, [("a", np.array([1, 0, 0], dtype="<f4"))], metric="dot", normalized=False
        )
        blob = path.read_bytes()
        assert blob[:8] == MAGIC
        assert struct.unpack("<IIQBB", blob[8:26]) == (1, 3, 1, 1, 0)
        assert struct.unpack("<H", blob[26:28]) == (1,)
        assert len(blob) == 28 + 1 + 12

    def test_empty_file_is_valid(self, tmp_path):
        path = tmp_path / "empty.vec"
        write_vector_file(str(path), 5, [])
        dim, metric, normalized, entries = read_vector_file(str(path))
        assert (dim, metric, normalized, entries) == (5, "cosine", True, [])


class TestWriteValidation:
    def test_duplicate_id(self, tmp_path):
        vec = np.zeros(2, dtype="<f4")
        with pytest.raises(ValueError, match="unique"):
            write_vector_file(str(tmp_path / "d.vec"), 2, [("x", vec), ("x", vec)])

    def test_empty_id(self, tmp_path):
        with pytest.raises(ValueError, match="non-empty"):
            write_vector_file(str(tmp_path / "e.vec"), 2, [("", np.zeros(2, dtype="<f4"))])

    def test_wrong_shape(self, tmp_path):
        with pytest.raises(ValueError, match="shape"):
            write_vector_file(str(tmp_path / "s.vec"), 3, [("x", np.zeros(2, dtype="<f4"))])

    def test_bad_metric(self, tmp_path):
        with pytest.raises(ValueError, match="metric"):
            write_vector_file(str(tmp_path / "m.vec"), 2, [], metric="euclid")


class TestReadValidation:
    @pytest.fixture
    def sample(self, tmp_path):
        path = tmp_path / "ok.vec"
        write_vector_file(str(path), 2, [("ab", np.array([0.6, 0.8], dtype="<f4"))])
        return path

    def test_bad_magic(self, sample):
        sample.write_bytes(b"NOTVECS1" + sample.read_bytes()[8:])
        with pytest.raises(VecFileError, match="magic"):
            read_vector_file(str(sample))

    def test_truncated(self, sample):
        sample.write_bytes(sample.read_bytes()[:-3])
        with pytest.raises(VecFileError, match="truncated"):
            read_vector_file(str(sample))

    def test_trailing_bytes(self, sample):
        sample.write_bytes(sample.read_bytes() + b"\x00")
        with pytest.raises(VecFileError, match="trailing"):
            read_vector_file(str(sample))

    def test_unknown_metric_code(self, sample):
        blob = bytearray(sample.read_bytes())
        blob[24] = 9
        sample.write_bytes(bytes(blob))
        with pytest.raises(VecFileError, match="metric"):
            read_vector_file(str(sample))

    def test_unsupported_version(self, sample):
        blob = bytearray(sample.read_bytes())
        blob[8:12] = struct.pack("<I", 2)
        sample.write_bytes(bytes(blob))
        with pytest.raises(VecFileError, match="version"):
            read_vector_file(str(sample))
