"""Entity retrieval as ranking over a gloss embedding index.

A gloss index holds one vector per retained gloss. Queries (a sentence in
any covered language, or raw image bytes against an English-only index)
are embedded and scored against every gloss by exact cosine similarity;
nodes are ranked by their best-scoring gloss. The evaluation harness
reports Hits@k percentages, mean rank, and population rank spread.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field

import numpy as np

from . import embed
from .errors import (
    BuildMismatch,
    DimensionMismatch,
    EmptyQuery,
    FormatError,
    GoldNotInIndex,
    InvalidImage,
    NoGlossesForLanguages,
    ProviderError,
    VsemError,
    ZeroVector,
)
from .images import validate_image_bytes
from .kg import LANGUAGES, Gloss

DEFAULT_KS = (1, 3, 10)


def gloss_ids(glosses: list[Gloss]) -> list[tuple[str, Gloss]]:
    """Assign stable ids of the form ``lang:seq:node``.

    Sequence numbers follow text order within each (node, lang) group and
    exact duplicate texts collapse to one entry, so ids depend only on the
    gloss set, never on presentation order.
    """
    grouped: dict[tuple[str, str], set[str]] = {}
    for g in glosses:
        grouped.setdefault((g.node, g.lang), set()).add(g.text)
    out = []
    for (node, lang), texts in grouped.items():
        for seq, text in enumerate(sorted(texts)):
            out.append((f"{lang}:{seq}:{node}", Gloss(node=node, lang=lang, text=text)))
    out.sort(key=lambda pair: pair[0])
    return out


@dataclass
class GlossIndex:
    """Immutable gloss-vector index with a gloss -> node mapping."""

    store: embed.VectorStore
    gloss_to_node: dict[str, str]
    languages: frozenset[str]
    provider: embed.EmbeddingProvider | None = None
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)
    _row_ids: list[str] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if set(self.store.ids()) != set(self.gloss_to_node):
            raise ValueError("store and gloss_to_node cover different id sets")

    @property
    def dim(self) -> int:
        return self.store.dim

    def __len__(self) -> int:
        return len(self.store)

    @property
    def node_ids(self) -> frozenset[str]:
        return frozenset(self.gloss_to_node.values())

    def _rows(self) -> tuple[list[str], np.ndarray]:
        # Unit-normalized f64 row matrix, built on first use. Rows follow
        # ascending gloss id so scans are insertion-order independent.
        if self._matrix is None:
            ids = sorted(self.store.ids())
            mat = np.empty((len(ids), self.dim), dtype=np.float64)
            for i, gid in enumerate(ids):
                mat[i] = self.store.get(gid).astype(np.float64)
                norm = float(np.linalg.norm(mat[i]))
                if norm == 0.0:
                    raise ZeroVector()
                mat[i] /= norm
            self._matrix = mat
            self._row_ids = ids
        return self._row_ids, self._matrix


@dataclass
class QueryResult:
    """Ranked node hits; position in the list is the 1-based rank."""

    results: list[tuple[str, float, str]]  # (node, score, best gloss id)

    def __iter__(self):
        return iter(self.results)

    def __len__(self) -> int:
        return len(self.results)

    @property
    def nodes(self) -> list[str]:
        return [node for node, _score, _gloss in self.results]

    def to_json(self) -> dict:
        return {
            "results": [
                {"node": node, "score": score, "gloss": gloss}
                for node, score, gloss in self.results
            ]
        }


def build_index(
    glosses: list[Gloss],
    provider: embed.EmbeddingProvider,
    languages: set[str] | frozenset[str] | None = None,
) -> GlossIndex:
    """Embed every gloss in the requested languages into a fresh index."""
    languages = frozenset(LANGUAGES if languages is None else languages)
    retained = [g for g in glosses if g.lang in languages]
    if not retained:
        raise NoGlossesForLanguages(languages)

    identified = gloss_ids(retained)
    vectors = []
    for gid, gloss in identified:
        try:
            vec = provider.embed_text(gloss.text, gloss.lang)
        except VsemError:
            raise
        except Exception as exc:
            raise ProviderError(f"embedding gloss {gid}: {exc}") from exc
        vectors.append(embed.as_vector(vec, None))

    dim = int(vectors[0].shape[0])
    store = embed.VectorStore(dim, metric="cosine", normalized=False)
    mapping = {}
    for (gid, gloss), vec in zip(identified, vectors):
        store.add(gid, embed.as_vector(vec, dim))
        mapping[gid] = gloss.node
    return GlossIndex(
        store=store, gloss_to_node=mapping, languages=languages, provider=provider
    )


def _rank_nodes(index: GlossIndex, query_vec: np.ndarray) -> list[tuple[str, float, str]]:
    """Full deduplicated node ranking for one query vector.

    Exhaustive cosine scan; each node keeps its best gloss (highest score,
    then lowest gloss id) and nodes order by (score desc, best gloss id).
    """
    qv = np.asarray(query_vec, dtype=np.float64).reshape(-1)
    if qv.shape[0] != index.dim:
        raise DimensionMismatch(index.dim, qv.shape[0])
    norm = float(np.linalg.norm(qv))
    if norm == 0.0:
        raise ZeroVector()
    qv = qv / norm

    ids, matrix = index._rows()
    scores = matrix @ qv
    np.clip(scores, -1.0, 1.0, out=scores)

    best: dict[str, tuple[float, str]] = {}
    for gid, score in zip(ids, scores):
        node = index.gloss_to_node[gid]
        s = float(score)
        prev = best.get(node)
        if prev is None or s > prev[0] or (s == prev[0] and gid < prev[1]):
            best[node] = (s, gid)
    ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[1][1]))
    return [(node, s, gid) for node, (s, gid) in ranked]


def retrieve_by_sentence(
    index: GlossIndex, sentence: str, lang: str | None = None, k: int = 10
) -> QueryResult:
    """Rank nodes against a sentence query, best k first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not sentence or not sentence.strip():
        raise EmptyQuery()
    if len(index) == 0:
        raise ValueError("index is empty")
    if index.provider is None:
        raise BuildMismatch("index has no provider attached for query embedding")
    qv = index.provider.embed_text(sentence, lang)
    return QueryResult(_rank_nodes(index, qv)[:k])


def retrieve_by_image(index: GlossIndex, data: bytes, k: int = 10) -> QueryResult:
    """Rank nodes against image bytes; needs an English-only index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.languages != frozenset({"en"}):
        raise BuildMismatch(
            "image retrieval needs an index built over English glosses only, "
            f"got languages {sorted(index.languages)}"
        )
    reason = validate_image_bytes(data)
    if reason is not None:
        raise InvalidImage(reason)
    if index.provider is None:
        raise BuildMismatch("index has no provider attached for query embedding")
    qv = index.provider.embed_image(data)
    return QueryResult(_rank_nodes(index, qv)[:k])


@dataclass
class EvalReport:
    """Hits@k percentages plus mean and population spread of gold ranks."""

    hits: dict[int, float]
    mean_rank: float
    rank_std: float
    count: int
    per_language: dict[str, "EvalReport"] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "hits": {str(k): self.hits[k] for k in sorted(self.hits)},
            "mean_rank": self.mean_rank,
            "rank_std": self.rank_std,
            "per_language": {
                lang: sub.to_json() for lang, sub in sorted(self.per_language.items())
            },
        }


def report_from_ranks(ranks: list[int], ks=DEFAULT_KS) -> EvalReport:
    if not ranks:
        raise ValueError("no ranks to report on")
    hits = {k: 100.0 * sum(1 for r in ranks if r <= k) / len(ranks) for k in ks}
    return EvalReport(
        hits=hits,
        mean_rank=statistics.fmean(ranks),
        rank_std=statistics.pstdev(ranks),
        count=len(ranks),
    )


def evaluate(index: GlossIndex, queries, ks=DEFAULT_KS) -> EvalReport:
    """Score queries of the form (query, gold[, lang]) against the index.

    ``query`` is either sentence text or raw image bytes. The gold rank is
    the gold node's position in the full deduplicated ranking; a gold node
    without any gloss in the index is a contract violation.
    """
    node_ids = index.node_ids
    ranks: list[int] = []
    by_lang: dict[str, list[int]] = {}
    for entry in queries:
        query, gold = entry[0], entry[1]
        lang = entry[2] if len(entry) > 2 else None
        if gold not in node_ids:
            raise GoldNotInIndex(query, gold)
        if isinstance(query, bytes):
            if index.languages != frozenset({"en"}):
                raise BuildMismatch(
                    "image queries need an index built over English glosses only"
                )
            reason = validate_image_bytes(query)
            if reason is not None:
                raise InvalidImage(reason)
            qv = index.provider.embed_image(query)
        else:
            if not query or not query.strip():
                raise EmptyQuery()
            qv = index.provider.embed_text(query, lang)
        ranking = _rank_nodes(index, qv)
        rank = next(i for i, (node, _s, _g) in enumerate(ranking, start=1) if node == gold)
        ranks.append(rank)
        if lang is not None:
            by_lang.setdefault(lang, []).append(rank)

    report = report_from_ranks(ranks, ks)
    report.per_language = {
        lang: report_from_ranks(sub, ks) for lang, sub in sorted(by_lang.items())
    }
    return report


# --- on-disk form ----------------------------------------------------------


def write_index(index: GlossIndex, path: str, provider_spec: str | None = None) -> None:
    """Persist vectors to ``path`` plus a JSON sidecar at ``path + '.meta.json'``.

    The sidecar records the gloss -> node map, the language set, and
    optionally the provider spec used to embed, so queries later can spin
    up a matching provider.
    """
    embed.write_vectors(index.store, path)
    meta = {
        "schema": 1,
        "languages": sorted(index.languages),
        "gloss_to_node": {gid: index.gloss_to_node[gid] for gid in sorted(index.gloss_to_node)},
        "provider": provider_spec,
    }
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def read_index(path: str, provider: embed.EmbeddingProvider | None = None) -> GlossIndex:
    """Load an index written by write_index; provider may be supplied anew."""
    store = embed.read_vectors(path)
    meta_path = path + ".meta.json"
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise FormatError(meta_path, None, "file not found") from None
    except json.JSONDecodeError as exc:
        raise FormatError(meta_path, None, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(meta, dict) or meta.get("schema") != 1:
        raise FormatError(meta_path, None, "unsupported or missing schema")
    mapping = meta.get("gloss_to_node")
    languages = meta.get("languages")
    if not isinstance(mapping, dict) or not isinstance(languages, list):
        raise FormatError(meta_path, None, "gloss_to_node and languages required")
    try:
        return GlossIndex(
            store=store,
            gloss_to_node=dict(mapping),
            languages=frozenset(languages),
            provider=provider,
        )
    except ValueError as exc:
        raise FormatError(meta_path, None, str(exc)) from exc


def stored_provider_spec(path: str) -> str | None:
    """The provider spec recorded alongside an index, if any."""
    try:
        with open(path + ".meta.json", "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except (FileNotFoundError, json.JSONDecodeError):
        return None
    spec = meta.get("provider") if isinstance(meta, dict) else None
    return spec if isinstance(spec, str) else None
