"""Typed in-memory knowledge graph.

Nodes carry multilingual glosses and content-addressed image records; facts
are directed, typed edges drawn from a closed set of 13 relation types.
Edges are stored in the direction they were retrieved, but neighborhood
queries are symmetric: expansion and lookup care about connectivity, not
direction.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import (
    DuplicateNode,
    FrozenGraph,
    SelfLoop,
    UnknownEndpoint,
    UnknownNode,
)

# ISO 639-1 codes of the supported gloss languages.
LANGUAGES = frozenset(
    {"ar", "zh", "nl", "en", "fa", "fr", "de", "it", "ko", "pl", "pt", "ru", "es", "sv"}
)

# Filter stages an image must have cleared before it may be attached to a node.
FILTER_FLAGS = frozenset({"valid", "unique", "photographic", "gloss_matched"})


class RelationType(str, Enum):
    """Closed enumeration of the 13 semantic edge types."""

    IS_A = "is-a"
    HAS_PART = "has-part"
    RELATED_TO = "related-to"
    USED_FOR = "used-for"
    USED_BY = "used-by"
    SUBJECT_OF = "subject-of"
    RECEIVES_ACTION = "receives-action"
    MADE_OF = "made-of"
    HAS_PROPERTY = "has-property"
    GLOSS_RELATED = "gloss-related"
    SYNONYM = "synonym"
    PART_OF = "part-of"
    LOCATED_AT = "located-at"


# Source-label rows that map exactly, checked before any wildcard.
_EXACT_LABELS: dict[str, RelationType] = {
    "is-a": RelationType.IS_A,
    "is_a": RelationType.IS_A,
    "has-part": RelationType.HAS_PART,
    "has_part": RelationType.HAS_PART,
    "related": RelationType.RELATED_TO,
    "use": RelationType.USED_FOR,
    "used-by": RelationType.USED_BY,
    "used_by": RelationType.USED_BY,
    "subject-of": RelationType.SUBJECT_OF,
    "subject_of": RelationType.SUBJECT_OF,
    "interaction": RelationType.RECEIVES_ACTION,
    "oath-made-by": RelationType.MADE_OF,
    "gloss-related": RelationType.GLOSS_RELATED,
    "taxon-synonym": RelationType.SYNONYM,
    "part-of": RelationType.PART_OF,
    "part_of": RelationType.PART_OF,
    "location": RelationType.LOCATED_AT,
}

# Wildcard rows, longest literal prefix first so the most specific one wins.
_WILDCARD_LABELS: list[tuple[str, RelationType]] = sorted(
    [
        ("has_", RelationType.HAS_PROPERTY),
        ("located_", RelationType.LOCATED_AT),
    ],
    key=lambda row: len(row[0]),
    reverse=True,
)


def map_relation_label(source_label: str) -> RelationType | None:
    """Map a source relation label onto one of the 13 types.

    Exact rows win over wildcard rows; among wildcards the longest literal
    prefix wins. Labels matching no row return ``None`` (unmapped is a
    value, not an error).
    """
    if not source_label:
        raise ValueError("source label must be non-empty")
    exact = _EXACT_LABELS.get(source_label)
    if exact is not None:
        return exact
    for prefix, rtype in _WILDCARD_LABELS:
        if source_label.startswith(prefix):
            return rtype
    return None


@dataclass(frozen=True)
class Gloss:
    """One short textual definition of a node, in one language."""

    node: str
    lang: str
    text: str

    def __post_init__(self):
        if not self.node:
            raise ValueError("gloss node id must be non-empty")
        if self.lang not in LANGUAGES:
            raise ValueError(f"unsupported gloss language: {self.lang!r}")
        if not self.text.strip():
            raise ValueError("gloss text must be non-empty")


@dataclass(frozen=True)
class ImageRecord:
    """A content-addressed image attached to (or destined for) a node.

    ``content_hash`` is the lowercase-hex SHA-1 of the image bytes.  Flags
    accumulate as the image clears filter stages; a record attached to a
    graph node must carry all four.
    """

    node: str
    content_hash: str
    locator: str
    flags: frozenset[str] = frozenset()

    def __post_init__(self):
        if len(self.content_hash) != 40 or any(
            c not in "0123456789abcdef" for c in self.content_hash
        ):
            raise ValueError(f"content_hash must be 40 lowercase hex chars: {self.content_hash!r}")
        unknown = self.flags - FILTER_FLAGS
        if unknown:
            raise ValueError(f"unknown filter flags: {sorted(unknown)}")

    def with_flag(self, flag: str) -> "ImageRecord":
        return replace(self, flags=self.flags | {flag})


@dataclass(frozen=True)
class Fact:
    """Directed typed edge <head, relation, tail>."""

    head: str
    relation: RelationType
    tail: str


@dataclass
class Node:
    """An entity: id, external source ids, glosses, validated images."""

    id: str
    source_ids: list[str] = field(default_factory=list)
    glosses: list[Gloss] = field(default_factory=list)
    images: list[ImageRecord] = field(default_factory=list)

    def __post_init__(self):
        if not self.id:
            raise ValueError("node id must be non-empty")
        for g in self.glosses:
            if g.node != self.id:
                raise ValueError(f"gloss for {g.node!r} attached to node {self.id!r}")
        seen: set[str] = set()
        for img in self.images:
            if img.node != self.id:
                raise ValueError(f"image for {img.node!r} attached to node {self.id!r}")
            if img.flags != FILTER_FLAGS:
                raise ValueError(
                    f"image {img.content_hash} on {self.id!r} is missing filter flags"
                )
            if img.content_hash in seen:
                raise ValueError(f"duplicate image {img.content_hash} on node {self.id!r}")
            seen.add(img.content_hash)

    def glosses_in(self, lang: str) -> list[Gloss]:
        return [g for g in self.glosses if g.lang == lang]


class KnowledgeGraph:
    """Mutable while under construction, immutable after :meth:`freeze`."""

    def __init__(self):
        self.nodes: dict[str, Node] = {}
        self._facts: set[Fact] = set()
        self._incident: dict[str, set[Fact]] = {}
        self._relation_counts: Counter[RelationType] = Counter()
        self._frozen = False

    # --- introspection ---

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def facts(self) -> frozenset[Fact]:
        return frozenset(self._facts)

    @property
    def fact_count(self) -> int:
        return len(self._facts)

    @property
    def relation_counts(self) -> dict[RelationType, int]:
        return dict(self._relation_counts)

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    # --- mutation ---

    def _check_mutable(self):
        if self._frozen:
            raise FrozenGraph()

    def add_node(self, node: Node) -> None:
        self._check_mutable()
        if node.id in self.nodes:
            raise DuplicateNode(node.id)
        self.nodes[node.id] = node
        self._incident[node.id] = set()

    def add_fact(self, fact: Fact) -> bool:
        """Store a fact; re-adding an identical fact is a no-op.

        Returns True when the fact was newly inserted.
        """
        self._check_mutable()
        if fact.head == fact.tail:
            raise SelfLoop(fact.head)
        for endpoint in (fact.head, fact.tail):
            if endpoint not in self.nodes:
                raise UnknownEndpoint(endpoint)
        if fact in self._facts:
            return False
        self._facts.add(fact)
        self._incident[fact.head].add(fact)
        self._incident[fact.tail].add(fact)
        self._relation_counts[fact.relation] += 1
        return True

    def freeze(self) -> "KnowledgeGraph":
        self._frozen = True
        return self

    # --- queries ---

    def neighbors(
        self, node_id: str, relation_filter: RelationType | None = None
    ) -> list[tuple[RelationType, str]]:
        """First-degree neighbors over incoming and outgoing edges.

        Deduplicated, ordered by (relation value, neighbor id).
        """
        if node_id not in self.nodes:
            raise UnknownNode(node_id)
        seen: set[tuple[RelationType, str]] = set()
        for fact in self._incident[node_id]:
            if relation_filter is not None and fact.relation != relation_filter:
                continue
            other = fact.tail if fact.head == node_id else fact.head
            seen.add((fact.relation, other))
        return sorted(seen, key=lambda pair: (pair[0].value, pair[1]))

    def distinct_relation_types(self, node_id: str) -> int:
        """Number of distinct relation types over all incident facts."""
        if node_id not in self.nodes:
            raise UnknownNode(node_id)
        return len({fact.relation for fact in self._incident[node_id]})

    def all_glosses(self) -> list[Gloss]:
        """Every gloss in the graph, nodes in id order."""
        out: list[Gloss] = []
        for node_id in sorted(self.nodes):
            out.extend(self.nodes[node_id].glosses)
        return out

    @staticmethod
    def _node_key(node: Node) -> tuple:
        # Gloss and image order carries no meaning; compare as multisets.
        return (
            node.id,
            tuple(node.source_ids),
            tuple(sorted((g.lang, g.text) for g in node.glosses)),
            tuple(
                sorted(
                    (i.content_hash, i.locator, tuple(sorted(i.flags)))
                    for i in node.images
                )
            ),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        if set(self.nodes) != set(other.nodes):
            return False
        if any(
            self._node_key(self.nodes[nid]) != self._node_key(other.nodes[nid])
            for nid in self.nodes
        ):
            return False
        return self._facts == other._facts

    def __repr__(self) -> str:
        return f"<KnowledgeGraph nodes={len(self.nodes)} facts={len(self._facts)}>"
