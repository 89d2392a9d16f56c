import base64
import io
import json

import numpy as np
import pytest

from vsem_adapter.cli import main
from vsem_adapter.encoders import AdapterConfig
from vsem_adapter.manifest import batch_embed_file
from vsem_adapter.protocol import serve_stdio
from vsem_adapter.vecfile import read_vector_file

DIM = 10


def config():
    return AdapterConfig(text_model=f"hash:{DIM}", image_model=f"hash:{DIM}")


def write_manifest(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write((row if isinstance(row, str) else json.dumps(row)) + "\n")


def text_row(rid, payload, lang=None):
    row = {"id": rid, "kind": "text", "payload": payload}
    if lang is not None:
        row["lang"] = lang
    return row


class TestBatchEmbed:
    def test_all_text_manifest(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        out = tmp_path / "out.vec"
        write_manifest(manifest, [text_row(f"t{i}", f"payload {i}") for i in range(10)])
        result = batch_embed_file(str(manifest), str(out), config())
        assert (result.written, result.errored, result.dim) == (10, 0, DIM)
        assert result.sidecar_path is None
        dim, metric, normalized, entries = read_vector_file(str(out))
        assert (dim, metric, normalized) == (DIM, "cosine", True)
        assert [eid for eid, _ in entries] == [f"t{i}" for i in range(10)]
        for _, vec in entries:
            assert abs(float(np.linalg.norm(vec.astype(np.float64))) - 1.0) <= 1e-4

    def test_corrupt_image_goes_to_sidecar(self, tmp_path, make_png):
        manifest = tmp_path / "m.jsonl"
        out = tmp_path / "out.vec"
        good = base64.b64encode(make_png()).decode("ascii")
        bad = base64.b64encode(b"scrambled bytes").decode("ascii")
        rows = [text_row(f"t{i}", f"p{i}") for i in range(8)]
        rows.append({"id": "img-ok", "kind": "image", "payload_b64": good})
        rows.insert(3, {"id": "img-bad", "kind": "image", "payload_b64": bad})
        write_manifest(manifest, rows)
        result = batch_embed_file(str(manifest), str(out), config())
        assert (result.written, result.errored) == (9, 1)
        _, _, _, entries = read_vector_file(str(out))
        assert [eid for eid, _ in entries] == [
            "t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7", "img-ok"
        ]
        sidecar = [json.loads(line) for line in open(result.sidecar_path, encoding="utf-8")]
        assert sidecar == [
            {"line": 4, "id": "img-bad", "error": "payload is not a decodable image"}
        ]

    def test_empty_manifest_writes_valid_empty_file(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        manifest.write_text("")
        out = tmp_path / "out.vec"
        result = batch_embed_file(str(manifest), str(out), config())
        assert (result.written, result.errored) == (0, 0)
        assert read_vector_file(str(out))[3] == []

    def test_duplicate_id_errors_second_row(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        out = tmp_path / "out.vec"
        write_manifest(manifest, [text_row("x", "first"), text_row("x", "second")])
        result = batch_embed_file(str(manifest), str(out), config())
        assert (result.written, result.errored) == (1, 1)
        sidecar = [json.loads(line) for line in open(result.sidecar_path, encoding="utf-8")]
        assert sidecar == [{"line": 2, "id": "x", "error": "duplicate id"}]

    def test_garbage_line_recorded_with_line_number(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        out = tmp_path / "out.vec"
        write_manifest(manifest, [text_row("a", "ok"), "{{{{", text_row("b", "ok too")])
        result = batch_embed_file(str(manifest), str(out), config())
        assert (result.written, result.errored) == (2, 1)
        sidecar = [json.loads(line) for line in open(result.sidecar_path, encoding="utf-8")]
        assert sidecar == [{"line": 2, "id": None, "error": "parse"}]

    def test_unwritable_output_is_fatal(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        write_manifest(manifest, [text_row("a", "ok")])
        with pytest.raises(OSError):
            batch_embed_file(str(manifest), str(tmp_path / "missing" / "out.vec"), config())

    def test_stale_sidecar_removed_on_clean_run(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        out = tmp_path / "out.vec"
        write_manifest(manifest, [text_row("a", "ok"), "broken"])
        first = batch_embed_file(str(manifest), str(out), config())
        assert first.sidecar_path is not None
        write_manifest(manifest, [text_row("a", "ok")])
        second = batch_embed_file(str(manifest), str(out), config())
        assert second.sidecar_path is None
        assert not (tmp_path / "out.vec.errors.jsonl").exists()

    def test_file_vectors_match_served_vectors(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        out = tmp_path / "out.vec"
        write_manifest(manifest, [text_row("probe", "shared payload", "en")])
        batch_embed_file(str(manifest), str(out), config())
        _, _, _, entries = read_vector_file(str(out))

        stdin = io.StringIO(json.dumps(text_row("probe", "shared payload", "en")) + "\n")
        stdout = io.StringIO()
        serve_stdio(config(), stdin=stdin, stdout=stdout)
        served = json.loads(stdout.getvalue().splitlines()[1])["vector"]
        assert np.asarray(served, dtype="<f4").tobytes() == entries[0][1].tobytes()

    def test_batch_size_does_not_change_output(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        write_manifest(manifest, [text_row(f"t{i}", f"p{i}") for i in range(9)])
        out_a = tmp_path / "a.vec"
        out_b = tmp_path / "b.vec"
        batch_embed_file(
            str(manifest), str(out_a),
            AdapterConfig(text_model=f"hash:{DIM}", image_model=f"hash:{DIM}", batch_size=2),
        )
        batch_embed_file(
            str(manifest), str(out_b),
            AdapterConfig(text_model=f"hash:{DIM}", image_model=f"hash:{DIM}", batch_size=50),
        )
        assert out_a.read_bytes() == out_b.read_bytes()


class TestCli:
    def test_embed_file_command(self, tmp_path, capsys):
        manifest = tmp_path / "m.jsonl"
        out = tmp_path / "out.vec"
        write_manifest(manifest, [text_row("a", "x"), text_row("b", "y")])
        code = main([
            "embed-file", str(manifest), str(out),
            "--text-model", "hash:6", "--image-model", "hash:6",
        ])
        assert code == 0
        assert "wrote 2 vectors" in capsys.readouterr().err
        assert read_vector_file(str(out))[0] == 6

    def test_bad_model_spec_exits_nonzero(self, tmp_path, capsys):
        manifest = tmp_path / "m.jsonl"
        write_manifest(manifest, [text_row("a", "x")])
        code = main([
            "embed-file", str(manifest), str(tmp_path / "out.vec"),
            "--text-model", "hash:oops", "--image-model", "hash:6",
        ])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_manifest_exits_nonzero(self, tmp_path):
        code = main([
            "embed-file", str(tmp_path / "absent.jsonl"), str(tmp_path / "out.vec"),
            "--text-model", "hash:6", "--image-model", "hash:6",
        ])
        assert code == 1
