"""Graph serialization, split generation, statistics, embedding export.

Graphs persist as four JSON-lines files in one directory (nodes, glosses,
facts, images), each row carrying a "schema" version field. Rows are
written in sorted order with a canonical JSON encoding, so write -> read ->
write is byte-identical.

Splits follow the per-language rule for glosses: every language present in
the graph contributes exactly ``eval_count_per_language`` entries to the
validation split and the same number to the test split, drawn by a
seed-derived per-language substream so one language's draw never perturbs
another's. Images and facts split uniformly under their own substreams.
"""

from __future__ import annotations

import json
import os
import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import embed, retrieval
from .errors import FormatError, InsufficientItems
from .kg import (
    FILTER_FLAGS,
    Fact,
    Gloss,
    ImageRecord,
    KnowledgeGraph,
    Node,
    RelationType,
)

SCHEMA = 1
GRAPH_FILES = ("nodes.jsonl", "glosses.jsonl", "facts.jsonl", "images.jsonl")
SPLIT_NAMES = ("train", "valid", "test")


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


# --- graph files -----------------------------------------------------------


def write_graph(graph: KnowledgeGraph, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    nodes = [graph.nodes[nid] for nid in sorted(graph.nodes)]

    with open(os.path.join(directory, "nodes.jsonl"), "w", encoding="utf-8") as fh:
        for node in nodes:
            fh.write(_dump({"schema": SCHEMA, "id": node.id, "source_ids": node.source_ids}) + "\n")

    with open(os.path.join(directory, "glosses.jsonl"), "w", encoding="utf-8") as fh:
        rows = [(g.node, g.lang, g.text) for node in nodes for g in node.glosses]
        for node_id, lang, text in sorted(rows):
            fh.write(_dump({"schema": SCHEMA, "node": node_id, "lang": lang, "text": text}) + "\n")

    with open(os.path.join(directory, "facts.jsonl"), "w", encoding="utf-8") as fh:
        rows = [(f.head, f.relation.value, f.tail) for f in graph.facts]
        for head, relation, tail in sorted(rows):
            fh.write(_dump({"schema": SCHEMA, "head": head, "relation": relation, "tail": tail}) + "\n")

    with open(os.path.join(directory, "images.jsonl"), "w", encoding="utf-8") as fh:
        rows = [
            (img.node, img.content_hash, img.locator, sorted(img.flags))
            for node in nodes
            for img in node.images
        ]
        for node_id, content_hash, locator, flags in sorted(rows):
            fh.write(
                _dump(
                    {
                        "schema": SCHEMA,
                        "node": node_id,
                        "hash": content_hash,
                        "locator": locator,
                        "flags": flags,
                    }
                )
                + "\n"
            )


def _graph_rows(path: str):
    if not os.path.isfile(path):
        raise FormatError(path, None, "file not found")
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
            if row.get("schema") != SCHEMA:
                raise FormatError(path, lineno, f"unsupported schema: {row.get('schema')!r}")
            yield lineno, row


def _str_field(row: dict, key: str, path: str, lineno: int) -> str:
    value = row.get(key)
    if not isinstance(value, str):
        raise FormatError(path, lineno, f"{key!r} must be a string")
    return value


def read_graph(directory: str) -> KnowledgeGraph:
    """Load a graph directory; the returned graph is frozen."""
    node_rows: dict[str, list[str]] = {}
    path = os.path.join(directory, "nodes.jsonl")
    for lineno, row in _graph_rows(path):
        node_id = _str_field(row, "id", path, lineno)
        if node_id in node_rows:
            raise FormatError(path, lineno, f"duplicate node id {node_id!r}")
        source_ids = row.get("source_ids", [])
        if not isinstance(source_ids, list) or not all(isinstance(s, str) for s in source_ids):
            raise FormatError(path, lineno, "source_ids must be a list of strings")
        node_rows[node_id] = list(source_ids)

    glosses: dict[str, list[Gloss]] = {nid: [] for nid in node_rows}
    path = os.path.join(directory, "glosses.jsonl")
    for lineno, row in _graph_rows(path):
        node_id = _str_field(row, "node", path, lineno)
        if node_id not in node_rows:
            raise FormatError(path, lineno, f"unknown node {node_id!r}")
        try:
            gloss = Gloss(
                node=node_id,
                lang=_str_field(row, "lang", path, lineno),
                text=_str_field(row, "text", path, lineno),
            )
        except ValueError as exc:
            raise FormatError(path, lineno, str(exc)) from exc
        glosses[node_id].append(gloss)

    images: dict[str, list[ImageRecord]] = {nid: [] for nid in node_rows}
    path = os.path.join(directory, "images.jsonl")
    for lineno, row in _graph_rows(path):
        node_id = _str_field(row, "node", path, lineno)
        if node_id not in node_rows:
            raise FormatError(path, lineno, f"unknown node {node_id!r}")
        flags = row.get("flags")
        if not isinstance(flags, list) or not set(flags) <= FILTER_FLAGS:
            raise FormatError(path, lineno, f"flags must be a subset of {sorted(FILTER_FLAGS)}")
        try:
            record = ImageRecord(
                node=node_id,
                content_hash=_str_field(row, "hash", path, lineno),
                locator=_str_field(row, "locator", path, lineno),
                flags=frozenset(flags),
            )
        except ValueError as exc:
            raise FormatError(path, lineno, str(exc)) from exc
        images[node_id].append(record)

    graph = KnowledgeGraph()
    for node_id in node_rows:
        try:
            graph.add_node(
                Node(
                    id=node_id,
                    source_ids=node_rows[node_id],
                    glosses=glosses[node_id],
                    images=images[node_id],
                )
            )
        except ValueError as exc:
            raise FormatError(os.path.join(directory, "nodes.jsonl"), None, str(exc)) from exc

    path = os.path.join(directory, "facts.jsonl")
    for lineno, row in _graph_rows(path):
        head = _str_field(row, "head", path, lineno)
        tail = _str_field(row, "tail", path, lineno)
        relation = _str_field(row, "relation", path, lineno)
        try:
            rtype = RelationType(relation)
        except ValueError:
            raise FormatError(path, lineno, f"unknown relation {relation!r}") from None
        try:
            graph.add_fact(Fact(head=head, relation=rtype, tail=tail))
        except Exception as exc:
            raise FormatError(path, lineno, str(exc)) from exc

    graph.freeze()
    return graph


# --- splits ----------------------------------------------------------------


@dataclass
class SplitSpec:
    eval_count_per_language: int = 2000
    image_eval_count: int = 20_000
    fact_eval_count: int = 20_000
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("eval_count_per_language", "image_eval_count", "fact_eval_count"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SplitManifest:
    spec: SplitSpec
    glosses: dict[str, list[str]]  # split name -> gloss ids
    images: dict[str, list[str]]  # split name -> content hashes
    facts: dict[str, list[tuple[str, str, str]]]  # split name -> (head, relation, tail)


def _three_way(items: list, eval_count: int, rng: random.Random) -> dict[str, list]:
    pool = sorted(items)
    rng.shuffle(pool)
    return {
        "valid": pool[:eval_count],
        "test": pool[eval_count : 2 * eval_count],
        "train": pool[2 * eval_count :],
    }


def make_splits(graph: KnowledgeGraph, spec: SplitSpec) -> SplitManifest:
    identified = retrieval.gloss_ids(list(graph.all_glosses()))
    by_lang: dict[str, list[str]] = {}
    for gid, gloss in identified:
        by_lang.setdefault(gloss.lang, []).append(gid)

    gloss_parts = {name: [] for name in SPLIT_NAMES}
    for lang in sorted(by_lang):
        needed = 2 * spec.eval_count_per_language
        available = len(by_lang[lang])
        if available < needed:
            raise InsufficientItems("glosses", lang, needed, available)
        rng = random.Random(f"{spec.rng_seed}/glosses/{lang}")
        parts = _three_way(by_lang[lang], spec.eval_count_per_language, rng)
        for name in SPLIT_NAMES:
            gloss_parts[name].extend(parts[name])

    hashes = sorted(
        img.content_hash for node in graph.nodes.values() for img in node.images
    )
    needed = 2 * spec.image_eval_count
    if len(hashes) < needed:
        raise InsufficientItems("images", None, needed, len(hashes))
    image_parts = _three_way(hashes, spec.image_eval_count, random.Random(f"{spec.rng_seed}/images"))

    triples = sorted((f.head, f.relation.value, f.tail) for f in graph.facts)
    needed = 2 * spec.fact_eval_count
    if len(triples) < needed:
        raise InsufficientItems("facts", None, needed, len(triples))
    fact_parts = _three_way(triples, spec.fact_eval_count, random.Random(f"{spec.rng_seed}/facts"))

    return SplitManifest(
        spec=spec,
        glosses={name: sorted(gloss_parts[name]) for name in SPLIT_NAMES},
        images={name: sorted(image_parts[name]) for name in SPLIT_NAMES},
        facts={name: sorted(fact_parts[name]) for name in SPLIT_NAMES},
    )


def write_splits(manifest: SplitManifest, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(
            _dump(
                {
                    "schema": SCHEMA,
                    "rng_seed": manifest.spec.rng_seed,
                    "eval_count_per_language": manifest.spec.eval_count_per_language,
                    "image_eval_count": manifest.spec.image_eval_count,
                    "fact_eval_count": manifest.spec.fact_eval_count,
                    "counts": {
                        category: {
                            name: len(getattr(manifest, category)[name])
                            for name in SPLIT_NAMES
                        }
                        for category in ("glosses", "images", "facts")
                    },
                }
            )
            + "\n"
        )
    with open(os.path.join(directory, "glosses.jsonl"), "w", encoding="utf-8") as fh:
        rows = [
            (gid, name) for name in SPLIT_NAMES for gid in manifest.glosses[name]
        ]
        for gid, name in sorted(rows):
            fh.write(_dump({"schema": SCHEMA, "id": gid, "split": name}) + "\n")
    with open(os.path.join(directory, "images.jsonl"), "w", encoding="utf-8") as fh:
        rows = [
            (content_hash, name)
            for name in SPLIT_NAMES
            for content_hash in manifest.images[name]
        ]
        for content_hash, name in sorted(rows):
            fh.write(_dump({"schema": SCHEMA, "hash": content_hash, "split": name}) + "\n")
    with open(os.path.join(directory, "facts.jsonl"), "w", encoding="utf-8") as fh:
        rows = [
            (head, relation, tail, name)
            for name in SPLIT_NAMES
            for head, relation, tail in manifest.facts[name]
        ]
        for head, relation, tail, name in sorted(rows):
            fh.write(
                _dump(
                    {
                        "schema": SCHEMA,
                        "head": head,
                        "relation": relation,
                        "tail": tail,
                        "split": name,
                    }
                )
                + "\n"
            )


def read_splits(directory: str) -> SplitManifest:
    path = os.path.join(directory, "manifest.json")
    if not os.path.isfile(path):
        raise FormatError(path, None, "file not found")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(path, None, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(meta, dict) or meta.get("schema") != SCHEMA:
        raise FormatError(path, None, "unsupported or missing schema")
    try:
        spec = SplitSpec(
            eval_count_per_language=meta["eval_count_per_language"],
            image_eval_count=meta["image_eval_count"],
            fact_eval_count=meta["fact_eval_count"],
            rng_seed=meta["rng_seed"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, None, f"bad spec fields: {exc}") from exc

    glosses = {name: [] for name in SPLIT_NAMES}
    path = os.path.join(directory, "glosses.jsonl")
    for lineno, row in _graph_rows(path):
        name = _str_field(row, "split", path, lineno)
        if name not in glosses:
            raise FormatError(path, lineno, f"unknown split {name!r}")
        glosses[name].append(_str_field(row, "id", path, lineno))

    images = {name: [] for name in SPLIT_NAMES}
    path = os.path.join(directory, "images.jsonl")
    for lineno, row in _graph_rows(path):
        name = _str_field(row, "split", path, lineno)
        if name not in images:
            raise FormatError(path, lineno, f"unknown split {name!r}")
        images[name].append(_str_field(row, "hash", path, lineno))

    facts = {name: [] for name in SPLIT_NAMES}
    path = os.path.join(directory, "facts.jsonl")
    for lineno, row in _graph_rows(path):
        name = _str_field(row, "split", path, lineno)
        if name not in facts:
            raise FormatError(path, lineno, f"unknown split {name!r}")
        facts[name].append(
            (
                _str_field(row, "head", path, lineno),
                _str_field(row, "relation", path, lineno),
                _str_field(row, "tail", path, lineno),
            )
        )

    return SplitManifest(
        spec=spec,
        glosses={name: sorted(glosses[name]) for name in SPLIT_NAMES},
        images={name: sorted(images[name]) for name in SPLIT_NAMES},
        facts={name: sorted(facts[name]) for name in SPLIT_NAMES},
    )


# --- statistics ------------------------------------------------------------


@dataclass
class StatsReport:
    node_count: int
    fact_count: int
    gloss_count: int
    image_count: int
    avg_glosses_per_node: Fraction
    avg_images_per_node: Fraction
    relation_counts: dict[str, int]
    language_coverage: dict[str, int]  # lang -> nodes with >= 1 gloss in lang
    image_histogram: dict[int, int]  # images per node -> node count
    max_image_node: tuple[str, int] | None

    def to_json(self) -> dict:
        def rational(value: Fraction) -> dict:
            return {
                "exact": [value.numerator, value.denominator],
                "value": float(value),
                "display": f"{float(value):.1f}",
            }

        return {
            "schema": SCHEMA,
            "nodes": self.node_count,
            "facts": self.fact_count,
            "glosses": self.gloss_count,
            "images": self.image_count,
            "avg_glosses_per_node": rational(self.avg_glosses_per_node),
            "avg_images_per_node": rational(self.avg_images_per_node),
            "relation_counts": dict(sorted(self.relation_counts.items())),
            "language_coverage": dict(sorted(self.language_coverage.items())),
            "image_histogram": {str(k): v for k, v in sorted(self.image_histogram.items())},
            "max_image_node": (
                None
                if self.max_image_node is None
                else {"node": self.max_image_node[0], "count": self.max_image_node[1]}
            ),
        }

    def render_text(self) -> str:
        lines = [
            f"nodes:   {self.node_count}",
            f"facts:   {self.fact_count}",
            f"glosses: {self.gloss_count} (avg {float(self.avg_glosses_per_node):.1f} per node)",
            f"images:  {self.image_count} (avg {float(self.avg_images_per_node):.1f} per node)",
            "relation counts:",
        ]
        for relation, count in sorted(self.relation_counts.items()):
            lines.append(f"  {relation:<16} {count}")
        lines.append("language coverage (nodes with a gloss):")
        for lang, count in sorted(self.language_coverage.items()):
            lines.append(f"  {lang}  {count}")
        if self.max_image_node is not None:
            node, count = self.max_image_node
            lines.append(f"most images: {node} ({count})")
        return "\n".join(lines)


def compute_stats(graph: KnowledgeGraph) -> StatsReport:
    node_count = len(graph)
    gloss_count = sum(len(node.glosses) for node in graph.nodes.values())
    image_count = sum(len(node.images) for node in graph.nodes.values())

    coverage: Counter = Counter()
    histogram: Counter = Counter()
    max_node: tuple[str, int] | None = None
    for node_id in sorted(graph.nodes):
        node = graph.nodes[node_id]
        for lang in {g.lang for g in node.glosses}:
            coverage[lang] += 1
        n_images = len(node.images)
        histogram[n_images] += 1
        if max_node is None or n_images > max_node[1]:
            max_node = (node_id, n_images)

    denominator = node_count if node_count else 1
    return StatsReport(
        node_count=node_count,
        fact_count=graph.fact_count,
        gloss_count=gloss_count,
        image_count=image_count,
        avg_glosses_per_node=Fraction(gloss_count, denominator),
        avg_images_per_node=Fraction(image_count, denominator),
        relation_counts={r.value: c for r, c in graph.relation_counts.items() if c},
        language_coverage=dict(coverage),
        image_histogram=dict(histogram),
        max_image_node=max_node,
    )


# --- embedding export ------------------------------------------------------


def export_node_embeddings(
    graph: KnowledgeGraph, provider: embed.EmbeddingProvider, path: str
) -> list[str]:
    """Write one mean-of-gloss-vectors record per node; returns skipped ids.

    Nodes without a single gloss cannot be represented; they are skipped
    and listed in the return value rather than failing the export.
    """
    store: embed.VectorStore | None = None
    skipped: list[str] = []
    for node_id in sorted(graph.nodes):
        node = graph.nodes[node_id]
        if not node.glosses:
            skipped.append(node_id)
            continue
        total: np.ndarray | None = None
        for gloss in node.glosses:
            vec = np.asarray(provider.embed_text(gloss.text, gloss.lang), dtype=np.float64)
            total = vec.copy() if total is None else total + vec
        mean = total / len(node.glosses)
        if store is None:
            store = embed.VectorStore(int(mean.shape[0]), metric="cosine", normalized=False)
        store.add(node_id, mean)
    if store is None:
        store = embed.VectorStore(provider.dim, metric="cosine", normalized=False)
    embed.write_vectors(store, path)
    return skipped
