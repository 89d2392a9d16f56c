"""Iterative knowledge-graph construction from seed nodes.

Each iteration runs four steps over the current node pool:

1. retrieve first-degree neighbors of every pool node from the source,
2. validate candidate images through a four-filter cascade
   (valid file -> content-hash dedup -> quality score -> gloss match),
3. drop candidates that lack images or relation-type diversity,
4. rank survivors and accept each pool node's top-k, up to the target
   node count.

Seeds are exempt from the cascade and from node filtering: they are the
curated starting pool and are always retained. Deduplication is global
across the whole run, so every image attached anywhere in the output graph
has a unique content hash.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from . import embed
from .errors import (
    EmptySeeds,
    NoEnglishGloss,
    ScorerError,
    SourceError,
    UnknownSeed,
)
from .images import image_sha1, validate_image_bytes
from .kg import (
    FILTER_FLAGS,
    Fact,
    Gloss,
    ImageRecord,
    KnowledgeGraph,
    Node,
    RelationType,
    map_relation_label,
)

STAGE_VALID = "valid_file"
STAGE_DEDUP = "dedup"
STAGE_QUALITY = "quality"
STAGE_GLOSS = "gloss_match"
STAGE_NODE = "node_filter"
STAGES = (STAGE_VALID, STAGE_DEDUP, STAGE_QUALITY, STAGE_GLOSS, STAGE_NODE)


@dataclass
class SourceImage:
    """An image as delivered by a knowledge source: locator plus raw bytes."""

    locator: str
    data: bytes


@dataclass
class SourceNode:
    """The source's view of one node: glosses, images, outgoing edges."""

    id: str
    source_ids: list[str] = field(default_factory=list)
    glosses: list[tuple[str, str]] = field(default_factory=list)  # (lang, text)
    images: list[SourceImage] = field(default_factory=list)
    relations: list[tuple[str, str]] = field(default_factory=list)  # (label, neighbor)


class KnowledgeSource(ABC):
    """Pluggable read-only backend supplying nodes during expansion.

    Implementations must be deterministic for a fixed backing dataset.
    Edges are listed on their head node; discovery follows listed edges, so
    a source wanting symmetric discovery lists both directions.
    """

    @abstractmethod
    def exists(self, node_id: str) -> bool: ...

    @abstractmethod
    def fetch(self, node_id: str) -> SourceNode: ...


class QualityScorer(ABC):
    """Scores an image in [0, 1]; 1 means photographic/good."""

    @abstractmethod
    def score(self, data: bytes) -> float: ...


class ConstantScorer(QualityScorer):
    def __init__(self, value: float = 1.0):
        self.value = value

    def score(self, data: bytes) -> float:
        return self.value


class TableScorer(QualityScorer):
    """Looks up scores by content hash, with a default for unknown images."""

    def __init__(self, scores: dict[str, float], default: float = 1.0):
        self.scores = dict(scores)
        self.default = default

    def score(self, data: bytes) -> float:
        return self.scores.get(image_sha1(data), self.default)


@dataclass
class PipelineConfig:
    target_node_count: int = 90_000
    per_node_top_k: int = 10
    gloss_match_threshold: float = 0.5
    quality_threshold: float = 0.5
    min_images: int = 1
    min_relation_types: int = 2
    max_iterations: int = 100

    def __post_init__(self):
        if self.target_node_count <= 0:
            raise ValueError("target_node_count must be positive")
        if self.per_node_top_k <= 0:
            raise ValueError("per_node_top_k must be positive")
        for name in ("gloss_match_threshold", "quality_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.min_images <= 0:
            raise ValueError("min_images must be positive")
        if self.min_relation_types <= 0:
            raise ValueError("min_relation_types must be positive")
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")


@dataclass
class StageCounts:
    input: int = 0
    kept: int = 0
    removed: int = 0


@dataclass
class FilterReport:
    """Counters for every filter stage plus per-iteration pool sizes."""

    stages: dict[str, StageCounts] = field(
        default_factory=lambda: {name: StageCounts() for name in STAGES}
    )
    pool_sizes: list[int] = field(default_factory=list)
    accepted_per_iteration: list[int] = field(default_factory=list)
    dropped: Counter = field(default_factory=Counter)
    iterations: int = 0

    def record(self, stage: str, kept: bool) -> None:
        counts = self.stages[stage]
        counts.input += 1
        if kept:
            counts.kept += 1
        else:
            counts.removed += 1

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "stages": {
                name: {"input": c.input, "kept": c.kept, "removed": c.removed}
                for name, c in self.stages.items()
            },
            "pool_sizes": list(self.pool_sizes),
            "accepted_per_iteration": list(self.accepted_per_iteration),
            "dropped": {key: int(n) for key, n in sorted(self.dropped.items())},
            "iterations": self.iterations,
        }


@dataclass
class CandidateNode:
    """A neighbor under consideration, with its filtered image set."""

    id: str
    record: SourceNode
    sourced_by: set[str] = field(default_factory=set)
    relation_types: frozenset[RelationType] = frozenset()
    images: list[ImageRecord] = field(default_factory=list)

    @property
    def english_glosses(self) -> list[str]:
        return [text for lang, text in self.record.glosses if lang == "en"]

    def priority_key(self, graph: KnowledgeGraph) -> tuple:
        counts = graph.relation_counts
        rarity = sum(
            1.0 / (1 + counts.get(rtype, 0))
            for rtype in sorted(self.relation_types, key=lambda r: r.value)
        )
        return (-rarity, -len(self.relation_types), -len(self.images), self.id)


# --- image filter cascade --------------------------------------------------


def filter_valid_image(data: bytes) -> bool:
    """Filter i: true iff the bytes decode as a supported raster format."""
    return validate_image_bytes(data) is None


def dedup_images(
    items,
    registry: set[str] | None = None,
    report: FilterReport | None = None,
) -> list[ImageRecord]:
    """Filter ii: one record per distinct content hash, first occurrence wins.

    ``items`` yields (node_id, data, locator) triples that already passed
    filter i. The registry makes deduplication global across a whole run;
    hashes of kept records are added to it.
    """
    registry = registry if registry is not None else set()
    kept: list[ImageRecord] = []
    for node_id, data, locator in items:
        digest = image_sha1(data)
        duplicate = digest in registry
        if report is not None:
            report.record(STAGE_DEDUP, kept=not duplicate)
        if duplicate:
            continue
        registry.add(digest)
        kept.append(
            ImageRecord(
                node=node_id,
                content_hash=digest,
                locator=locator,
                flags=frozenset({"valid", "unique"}),
            )
        )
    return kept


def filter_quality(data: bytes, scorer: QualityScorer, threshold: float) -> bool:
    """Filter iii: keep iff score >= threshold (inclusive boundary)."""
    try:
        score = scorer.score(data)
    except Exception as exc:
        raise ScorerError(image_sha1(data), str(exc)) from exc
    if not 0.0 <= score <= 1.0:
        raise ScorerError(image_sha1(data), f"score out of range: {score}")
    return score >= threshold


def filter_gloss_match(
    data: bytes,
    english_glosses: list[str],
    embedder: embed.EmbeddingProvider,
    threshold: float = 0.5,
) -> bool:
    """Filter iv: keep iff some English gloss has dot-product > threshold.

    The inequality is strict: a dot-product exactly at the threshold drops
    the image.
    """
    if not english_glosses:
        raise NoEnglishGloss("<unknown>")
    image_vec = embedder.embed_image(data)
    best = max(
        embed.dot(image_vec, embedder.embed_text(text, "en")) for text in english_glosses
    )
    return best > threshold


def filter_node(candidate: CandidateNode, config: PipelineConfig) -> bool:
    """Keep a candidate iff it has enough images and relation diversity."""
    return (
        len(candidate.images) >= config.min_images
        and len(candidate.relation_types) >= config.min_relation_types
    )


# --- expansion steps -------------------------------------------------------


def _mapped_types(record: SourceNode, report: FilterReport | None) -> frozenset[RelationType]:
    types = set()
    for label, _neighbor in record.relations:
        rtype = map_relation_label(label)
        if rtype is None:
            if report is not None:
                report.dropped["unmapped_label"] += 1
            continue
        types.add(rtype)
    return frozenset(types)


def retrieve_neighbors(
    pool: set[str],
    source: KnowledgeSource,
    report: FilterReport | None = None,
    cache: dict[str, SourceNode] | None = None,
) -> list[CandidateNode]:
    """Collect first-degree neighbors of the pool, deduplicated.

    Nodes already in the pool are excluded; neighbors reachable only via
    unmapped relation labels are not discovered. Returned candidates are
    sorted by id and carry the set of pool nodes that sourced them.
    """
    if not pool:
        raise ValueError("pool must be non-empty")
    cache = cache if cache is not None else {}
    sourced_by: dict[str, set[str]] = defaultdict(set)
    for pool_id in sorted(pool):
        record = _fetch(source, pool_id, cache)
        for label, neighbor in record.relations:
            if map_relation_label(label) is None:
                if report is not None:
                    report.dropped["unmapped_discovery_edge"] += 1
                continue
            if neighbor == pool_id:
                if report is not None:
                    report.dropped["self_loop"] += 1
                continue
            if neighbor in pool:
                continue
            sourced_by[neighbor].add(pool_id)

    candidates = []
    for neighbor in sorted(sourced_by):
        if not source.exists(neighbor):
            if report is not None:
                report.dropped["dangling_neighbor"] += 1
            continue
        record = _fetch(source, neighbor, cache)
        candidates.append(
            CandidateNode(
                id=neighbor,
                record=record,
                sourced_by=sourced_by[neighbor],
                relation_types=_mapped_types(record, report),
            )
        )
    return candidates


def _fetch(source: KnowledgeSource, node_id: str, cache: dict[str, SourceNode]) -> SourceNode:
    hit = cache.get(node_id)
    if hit is not None:
        return hit
    try:
        record = source.fetch(node_id)
    except SourceError:
        raise
    except Exception as exc:
        raise SourceError(node_id, str(exc)) from exc
    cache[node_id] = record
    return record


def validate_images(
    candidate: CandidateNode,
    scorer: QualityScorer,
    embedder: embed.EmbeddingProvider,
    config: PipelineConfig,
    registry: set[str],
    report: FilterReport,
) -> None:
    """Run filters i-iv over a candidate's images, in order.

    Surviving records (all four flags set) land on ``candidate.images``.
    ``registry`` holds content hashes already claimed; survivors and
    first-occurrence duplicates claim their hash in it.
    """
    surviving: list[ImageRecord] = []
    for img in candidate.record.images:
        reason = validate_image_bytes(img.data)
        report.record(STAGE_VALID, kept=reason is None)
        if reason is not None:
            report.dropped[f"invalid:{reason}"] += 1
            continue

        records = dedup_images(
            [(candidate.id, img.data, img.locator)], registry=registry, report=report
        )
        if not records:
            continue
        record = records[0]

        keep = filter_quality(img.data, scorer, config.quality_threshold)
        report.record(STAGE_QUALITY, kept=keep)
        if not keep:
            continue
        record = record.with_flag("photographic")

        english = candidate.english_glosses
        if not english:
            report.record(STAGE_GLOSS, kept=False)
            report.dropped["no_english_gloss"] += 1
            continue
        keep = filter_gloss_match(
            img.data, english, embedder, config.gloss_match_threshold
        )
        report.record(STAGE_GLOSS, kept=keep)
        if not keep:
            continue
        surviving.append(record.with_flag("gloss_matched"))
    candidate.images = surviving


def rank_candidates(
    candidates: list[CandidateNode], graph: KnowledgeGraph
) -> list[CandidateNode]:
    """Order candidates for acceptance, best first.

    Composite key, descending: rarity of the candidate's relation types
    against current graph counts, then relation-type diversity, then image
    count; ties broken by ascending node id.
    """
    return sorted(candidates, key=lambda c: c.priority_key(graph))


@dataclass
class _BuildState:
    """Carries cross-iteration bookkeeping through one expand() run."""

    registry: set[str] = field(default_factory=set)
    pending_in: dict[str, list[tuple[str, RelationType]]] = field(
        default_factory=lambda: defaultdict(list)
    )
    cache: dict[str, SourceNode] = field(default_factory=dict)


def _admit(
    graph: KnowledgeGraph,
    node_id: str,
    record: SourceNode,
    images: list[ImageRecord],
    state: _BuildState,
    report: FilterReport | None,
) -> None:
    glosses = [Gloss(node=node_id, lang=lang, text=text) for lang, text in record.glosses]
    graph.add_node(
        Node(id=node_id, source_ids=list(record.source_ids), glosses=glosses, images=images)
    )
    for img in images:
        state.registry.add(img.content_hash)

    # Outgoing edges to members become facts now; the rest wait on arrival.
    for label, neighbor in record.relations:
        rtype = map_relation_label(label)
        if rtype is None:
            continue
        if neighbor == node_id:
            if report is not None:
                report.dropped["self_loop"] += 1
            continue
        if neighbor in graph:
            graph.add_fact(Fact(head=node_id, relation=rtype, tail=neighbor))
        else:
            state.pending_in[neighbor].append((node_id, rtype))

    # Edges from earlier members that were waiting for this node.
    for head, rtype in state.pending_in.pop(node_id, []):
        if head in graph:
            graph.add_fact(Fact(head=head, relation=rtype, tail=node_id))


def update_pool(
    graph: KnowledgeGraph,
    ranked: list[CandidateNode],
    config: PipelineConfig,
    state: _BuildState | None = None,
    report: FilterReport | None = None,
) -> list[CandidateNode]:
    """Step 4: accept each sourcing node's top-k candidates, capped at N.

    A candidate is selected when it ranks within the top ``per_node_top_k``
    of at least one pool node that sourced it; selected candidates are
    admitted in global rank order until the graph reaches the target size.
    Returns the accepted candidates.
    """
    state = state if state is not None else _BuildState()
    per_sourcer: dict[str, int] = defaultdict(int)
    selected: set[str] = set()
    for cand in ranked:
        in_budget = False
        for sourcer in cand.sourced_by:
            if per_sourcer[sourcer] < config.per_node_top_k:
                per_sourcer[sourcer] += 1
                in_budget = True
        if in_budget:
            selected.add(cand.id)
        elif report is not None:
            report.dropped["over_budget"] += 1

    accepted: list[CandidateNode] = []
    for cand in ranked:
        if cand.id not in selected:
            continue
        if len(graph) >= config.target_node_count:
            if report is not None:
                report.dropped["over_capacity"] += 1
            continue
        _admit(graph, cand.id, cand.record, cand.images, state, report)
        accepted.append(cand)
    return accepted


def expand(
    seeds: list[str],
    source: KnowledgeSource,
    scorer: QualityScorer,
    embedder: embed.EmbeddingProvider,
    config: PipelineConfig | None = None,
) -> tuple[KnowledgeGraph, FilterReport]:
    """Grow a graph from seeds until it reaches the target size.

    Deterministic for fixed inputs; the returned graph is frozen. The loop
    stops when the graph holds ``target_node_count`` nodes, an iteration
    accepts nothing, or ``max_iterations`` is hit.
    """
    config = config if config is not None else PipelineConfig()
    if not seeds:
        raise EmptySeeds()
    unique_seeds = list(dict.fromkeys(seeds))
    for seed in unique_seeds:
        if not source.exists(seed):
            raise UnknownSeed(seed)

    graph = KnowledgeGraph()
    report = FilterReport()
    state = _BuildState()

    # Seeds bypass the cascade and node filtering; global dedup still
    # applies so attached hashes stay unique across the graph.
    for seed in unique_seeds:
        record = _fetch(source, seed, state.cache)
        images = []
        for img in record.images:
            digest = image_sha1(img.data)
            if digest in state.registry:
                continue
            state.registry.add(digest)
            images.append(
                ImageRecord(
                    node=seed,
                    content_hash=digest,
                    locator=img.locator,
                    flags=FILTER_FLAGS,
                )
            )
        _admit(graph, seed, record, images, state, report)
    report.pool_sizes.append(len(graph))

    for _ in range(config.max_iterations):
        if len(graph) >= config.target_node_count:
            break
        pool = set(graph.nodes)
        candidates = retrieve_neighbors(pool, source, report=report, cache=state.cache)
        if not candidates:
            break
        report.iterations += 1

        # Claims made while filtering this batch are transient: only images
        # of accepted nodes stay registered across iterations.
        batch_registry = set(state.registry)
        for cand in candidates:
            validate_images(cand, scorer, embedder, config, batch_registry, report)

        survivors = []
        for cand in candidates:
            keep = filter_node(cand, config)
            report.record(STAGE_NODE, kept=keep)
            if keep:
                survivors.append(cand)

        ranked = rank_candidates(survivors, graph)
        accepted = update_pool(graph, ranked, config, state=state, report=report)
        report.accepted_per_iteration.append(len(accepted))
        report.pool_sizes.append(len(graph))
        if not accepted:
            break

    graph.freeze()
    return graph, report
