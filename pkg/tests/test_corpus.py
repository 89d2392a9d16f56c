import hashlib
import json
from collections import Counter
from fractions import Fraction

import pytest

from vsem.corpus import (
    GRAPH_FILES,
    SPLIT_NAMES,
    SplitSpec,
    compute_stats,
    export_node_embeddings,
    make_splits,
    read_graph,
    read_splits,
    write_graph,
    write_splits,
)
from vsem.embed import mock_provider, read_vectors
from vsem.errors import FormatError, InsufficientItems
from vsem.kg import (
    FILTER_FLAGS,
    Fact,
    Gloss,
    ImageRecord,
    KnowledgeGraph,
    Node,
    RelationType,
)


def fake_hash(label: str) -> str:
    return hashlib.sha1(label.encode("utf-8")).hexdigest()


def build_graph(n=8, langs=("de", "en"), images_per_node=2, extra_glosses=()):
    graph = KnowledgeGraph()
    ids = [f"node{i:02d}" for i in range(n)]
    for i, nid in enumerate(ids):
        glosses = [
            Gloss(node=nid, lang=lang, text=f"{lang} gloss {i}.{j}")
            for lang in langs
            for j in range(2)
        ]
        glosses += [Gloss(node=nid, lang=lang, text=text)
                    for gnid, lang, text in extra_glosses if gnid == nid]
        images = [
            ImageRecord(
                node=nid,
                content_hash=fake_hash(f"{nid}/{j}"),
                locator=f"loc:{nid}:{j}",
                flags=FILTER_FLAGS,
            )
            for j in range(images_per_node)
        ]
        graph.add_node(Node(id=nid, source_ids=[f"s:{nid}"], glosses=glosses, images=images))
    relations = list(RelationType)
    for i, nid in enumerate(ids):
        for d in (1, 2, 3):
            tail = ids[(i + d) % n]
            if tail != nid:
                graph.add_fact(
                    Fact(head=nid, relation=relations[(i + d) % len(relations)], tail=tail)
                )
    return graph


class TestGraphFiles:
    def test_round_trip_identity(self, tmp_path):
        graph = build_graph()
        write_graph(graph, str(tmp_path))
        loaded = read_graph(str(tmp_path))
        assert loaded == graph
        assert loaded.frozen

    def test_rewrite_is_byte_identical(self, tmp_path):
        graph = build_graph()
        d1, d2 = tmp_path / "a", tmp_path / "b"
        write_graph(graph, str(d1))
        write_graph(read_graph(str(d1)), str(d2))
        for name in GRAPH_FILES:
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_expected_files(self, tmp_path):
        write_graph(build_graph(n=2), str(tmp_path))
        assert sorted(p.name for p in tmp_path.iterdir()) == sorted(GRAPH_FILES)

    def test_non_ascii_survives_raw(self, tmp_path):
        graph = KnowledgeGraph()
        graph.add_node(
            Node(
                id="n",
                source_ids=["s"],
                glosses=[Gloss(node="n", lang="zh", text="猫科动物")],
                images=[],
            )
        )
        write_graph(graph, str(tmp_path))
        raw = (tmp_path / "glosses.jsonl").read_text(encoding="utf-8")
        assert "猫科动物" in raw and "\\u" not in raw
        assert read_graph(str(tmp_path)).node("n").glosses[0].text == "猫科动物"

    def test_empty_graph_round_trip(self, tmp_path):
        write_graph(KnowledgeGraph(), str(tmp_path))
        assert len(read_graph(str(tmp_path))) == 0

    def test_missing_file(self, tmp_path):
        write_graph(build_graph(n=2), str(tmp_path))
        (tmp_path / "facts.jsonl").unlink()
        with pytest.raises(FormatError) as err:
            read_graph(str(tmp_path))
        assert err.value.reason == "file not found"

    def test_bad_json_reports_line(self, tmp_path):
        write_graph(build_graph(n=2), str(tmp_path))
        path = tmp_path / "glosses.jsonl"
        lines = path.read_text(encoding="utf-8").splitlines()
        lines[1] = "{broken"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(FormatError) as err:
            read_graph(str(tmp_path))
        assert err.value.line == 2
        assert "invalid JSON" in err.value.reason

    def test_unknown_node_reference(self, tmp_path):
        write_graph(build_graph(n=2), str(tmp_path))
        with open(tmp_path / "images.jsonl", "a", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {
                        "schema": 1,
                        "node": "ghost",
                        "hash": fake_hash("g"),
                        "locator": "x",
                        "flags": [],
                    }
                )
                + "\n"
            )
        with pytest.raises(FormatError, match="ghost"):
            read_graph(str(tmp_path))

    def test_unknown_relation(self, tmp_path):
        write_graph(build_graph(n=2), str(tmp_path))
        with open(tmp_path / "facts.jsonl", "a", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {"schema": 1, "head": "node00", "relation": "friends-with", "tail": "node01"}
                )
                + "\n"
            )
        with pytest.raises(FormatError, match="friends-with"):
            read_graph(str(tmp_path))

    def test_wrong_schema(self, tmp_path):
        write_graph(build_graph(n=2), str(tmp_path))
        with open(tmp_path / "nodes.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"schema": 2, "id": "zz", "source_ids": []}) + "\n")
        with pytest.raises(FormatError, match="schema"):
            read_graph(str(tmp_path))

    def test_duplicate_node_row(self, tmp_path):
        write_graph(build_graph(n=2), str(tmp_path))
        with open(tmp_path / "nodes.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"schema": 1, "id": "node00", "source_ids": []}) + "\n")
        with pytest.raises(FormatError, match="duplicate"):
            read_graph(str(tmp_path))


SMALL_SPEC = SplitSpec(
    eval_count_per_language=2, image_eval_count=3, fact_eval_count=4, rng_seed=0
)


class TestSplits:
    def test_partition_is_disjoint_and_complete(self):
        graph = build_graph()
        manifest = make_splits(graph, SMALL_SPEC)

        all_glosses = sorted(sum((manifest.glosses[n] for n in SPLIT_NAMES), []))
        assert len(all_glosses) == len(set(all_glosses)) == 32
        all_images = sorted(sum((manifest.images[n] for n in SPLIT_NAMES), []))
        expected_hashes = sorted(
            img.content_hash for node in graph.nodes.values() for img in node.images
        )
        assert all_images == expected_hashes
        all_facts = sorted(sum((manifest.facts[n] for n in SPLIT_NAMES), []))
        assert all_facts == sorted((f.head, f.relation.value, f.tail) for f in graph.facts)

    def test_eval_counts_exact_per_language(self):
        manifest = make_splits(build_graph(), SMALL_SPEC)
        for name in ("valid", "test"):
            by_lang = Counter(gid.split(":", 1)[0] for gid in manifest.glosses[name])
            assert by_lang == {"de": 2, "en": 2}
        assert len(manifest.images["valid"]) == len(manifest.images["test"]) == 3
        assert len(manifest.facts["valid"]) == len(manifest.facts["test"]) == 4

    def test_deterministic_and_seed_sensitive(self):
        graph = build_graph()
        a = make_splits(graph, SMALL_SPEC)
        b = make_splits(graph, SMALL_SPEC)
        assert a == b
        other = make_splits(
            graph,
            SplitSpec(eval_count_per_language=2, image_eval_count=3,
                      fact_eval_count=4, rng_seed=1),
        )
        assert (a.glosses, a.images, a.facts) != (other.glosses, other.images, other.facts)

    def test_language_streams_independent(self):
        base = make_splits(build_graph(), SMALL_SPEC)
        grown = make_splits(
            build_graph(extra_glosses=[("node07", "de", "noch eine Glosse")]),
            SMALL_SPEC,
        )
        for name in SPLIT_NAMES:
            en = [g for g in base.glosses[name] if g.startswith("en:")]
            assert en == [g for g in grown.glosses[name] if g.startswith("en:")]

    def test_insufficient_items(self):
        graph = build_graph()
        with pytest.raises(InsufficientItems) as err:
            make_splits(graph, SplitSpec(eval_count_per_language=9,
                                         image_eval_count=3, fact_eval_count=4))
        assert err.value.category == "glosses" and err.value.language == "de"
        with pytest.raises(InsufficientItems) as err:
            make_splits(graph, SplitSpec(eval_count_per_language=2,
                                         image_eval_count=9, fact_eval_count=4))
        assert err.value.category == "images"
        with pytest.raises(InsufficientItems) as err:
            make_splits(graph, SplitSpec(eval_count_per_language=2,
                                         image_eval_count=3, fact_eval_count=13))
        assert err.value.category == "facts"

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SplitSpec(eval_count_per_language=0)

    def test_write_read_round_trip(self, tmp_path):
        manifest = make_splits(build_graph(), SMALL_SPEC)
        write_splits(manifest, str(tmp_path))
        assert read_splits(str(tmp_path)) == manifest

    def test_rewrite_is_byte_identical(self, tmp_path):
        manifest = make_splits(build_graph(), SMALL_SPEC)
        d1, d2 = tmp_path / "a", tmp_path / "b"
        write_splits(manifest, str(d1))
        write_splits(read_splits(str(d1)), str(d2))
        for name in ("manifest.json", "glosses.jsonl", "images.jsonl", "facts.jsonl"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_unknown_split_label(self, tmp_path):
        write_splits(make_splits(build_graph(), SMALL_SPEC), str(tmp_path))
        with open(tmp_path / "glosses.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"schema": 1, "id": "en:0:node00", "split": "dev"}) + "\n")
        with pytest.raises(FormatError, match="dev"):
            read_splits(str(tmp_path))


class TestStats:
    def test_against_brute_force(self):
        graph = build_graph()
        stats = compute_stats(graph)
        assert stats.node_count == 8
        assert stats.fact_count == len(graph.facts) == 24
        assert stats.gloss_count == 32
        assert stats.image_count == 16
        assert stats.avg_glosses_per_node == Fraction(4)
        assert stats.avg_images_per_node == Fraction(2)
        expected_relations = Counter(f.relation.value for f in graph.facts)
        assert stats.relation_counts == dict(expected_relations)
        assert stats.language_coverage == {"de": 8, "en": 8}
        assert stats.image_histogram == {2: 8}
        assert stats.max_image_node == ("node00", 2)

    def test_exact_fraction_average(self):
        graph = KnowledgeGraph()
        for i, n_glosses in enumerate([1, 0, 0]):
            nid = f"n{i}"
            graph.add_node(
                Node(
                    id=nid,
                    source_ids=[],
                    glosses=[Gloss(node=nid, lang="en", text="t")] * n_glosses,
                    images=[],
                )
            )
        stats = compute_stats(graph)
        assert stats.avg_glosses_per_node == Fraction(1, 3)
        encoded = stats.to_json()["avg_glosses_per_node"]
        assert encoded["exact"] == [1, 3]
        assert encoded["display"] == "0.3"

    def test_empty_graph(self):
        stats = compute_stats(KnowledgeGraph())
        assert stats.node_count == 0
        assert stats.avg_glosses_per_node == Fraction(0)
        assert stats.max_image_node is None
        assert json.dumps(stats.to_json())

    def test_json_and_text_rendering(self):
        stats = compute_stats(build_graph())
        payload = stats.to_json()
        assert payload["avg_glosses_per_node"] == {
            "exact": [4, 1],
            "value": 4.0,
            "display": "4.0",
        }
        assert set(payload["image_histogram"]) == {"2"}
        text = stats.render_text()
        assert "nodes:   8" in text
        assert "most images: node00 (2)" in text


class TestExportEmbeddings:
    def test_mean_of_gloss_vectors(self, tmp_path):
        graph = KnowledgeGraph()
        graph.add_node(
            Node(
                id="n",
                source_ids=[],
                glosses=[
                    Gloss(node="n", lang="en", text="a"),
                    Gloss(node="n", lang="de", text="b"),
                ],
                images=[],
            )
        )
        provider = mock_provider({"a": [1.0, 0.0], "b": [0.0, 1.0]}, 2)
        path = str(tmp_path / "nodes.vec")
        skipped = export_node_embeddings(graph, provider, path)
        assert skipped == []
        store = read_vectors(path)
        assert list(store.get("n")) == [0.5, 0.5]

    def test_glossless_nodes_skipped(self, tmp_path):
        graph = KnowledgeGraph()
        graph.add_node(Node(id="bare", source_ids=[], glosses=[], images=[]))
        graph.add_node(
            Node(
                id="ok",
                source_ids=[],
                glosses=[Gloss(node="ok", lang="en", text="t")],
                images=[],
            )
        )
        path = str(tmp_path / "nodes.vec")
        skipped = export_node_embeddings(graph, mock_provider({"t": [1.0, 0.0]}, 2), path)
        assert skipped == ["bare"]
        assert read_vectors(path).ids() == ["ok"]

    def test_empty_graph_writes_valid_file(self, tmp_path):
        path = str(tmp_path / "nodes.vec")
        skipped = export_node_embeddings(KnowledgeGraph(), mock_provider({}, 3), path)
        assert skipped == []
        store = read_vectors(path)
        assert len(store) == 0 and store.dim == 3
