"""Exception types shared across the package.

Every error raised by the library derives from :class:`VsemError` so callers
can catch one base type at API boundaries (the CLI maps subtrees to exit
codes).
"""


class VsemError(Exception):
    """Base class for all library errors."""


# --- knowledge graph -------------------------------------------------------

class GraphError(VsemError):
    pass


class DuplicateNode(GraphError):
    def __init__(self, node_id: str):
        super().__init__(f"node already present: {node_id!r}")
        self.node_id = node_id


class UnknownNode(GraphError):
    def __init__(self, node_id: str):
        super().__init__(f"unknown node: {node_id!r}")
        self.node_id = node_id


class UnknownEndpoint(GraphError):
    def __init__(self, node_id: str):
        super().__init__(f"fact endpoint not in graph: {node_id!r}")
        self.node_id = node_id


class SelfLoop(GraphError):
    def __init__(self, node_id: str):
        super().__init__(f"self-loop rejected: {node_id!r}")
        self.node_id = node_id


class FrozenGraph(GraphError):
    def __init__(self):
        super().__init__("graph is frozen; mutation rejected")


# --- construction pipeline -------------------------------------------------

class PipelineError(VsemError):
    pass


class EmptySeeds(PipelineError):
    def __init__(self):
        super().__init__("seed list is empty")


class UnknownSeed(PipelineError):
    def __init__(self, node_id: str):
        super().__init__(f"seed not present in source: {node_id!r}")
        self.node_id = node_id


class SourceError(PipelineError):
    def __init__(self, node_id: str, reason: str):
        super().__init__(f"source failed for {node_id!r}: {reason}")
        self.node_id = node_id
        self.reason = reason


class ScorerError(PipelineError):
    def __init__(self, content_hash: str, reason: str):
        super().__init__(f"quality scorer failed for image {content_hash}: {reason}")
        self.content_hash = content_hash
        self.reason = reason


class NoEnglishGloss(PipelineError):
    """Gloss-match filter cannot run: the node has no English gloss."""

    def __init__(self, node_id: str):
        super().__init__(f"node has no English gloss: {node_id!r}")
        self.node_id = node_id


# --- embeddings ------------------------------------------------------------

class EmbeddingError(VsemError):
    pass


class DimensionMismatch(EmbeddingError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"dimension mismatch: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class ZeroVector(EmbeddingError):
    def __init__(self):
        super().__init__("zero vector has no direction")


class ProviderError(EmbeddingError):
    """The provider answered a request with an error payload."""


class ProtocolError(EmbeddingError):
    """The provider emitted a line that does not parse as a protocol message."""


class ProviderCrash(EmbeddingError):
    """The provider process exited while requests were outstanding."""


class ProviderTimeout(EmbeddingError):
    """No response for a request within the configured timeout."""


# --- retrieval -------------------------------------------------------------

class RetrievalError(VsemError):
    pass


class NoGlossesForLanguages(RetrievalError):
    def __init__(self, languages):
        langs = ",".join(sorted(languages))
        super().__init__(f"no glosses retained for languages: {langs}")
        self.languages = frozenset(languages)


class EmptyQuery(RetrievalError):
    def __init__(self):
        super().__init__("query text is empty")


class GoldNotInIndex(RetrievalError):
    def __init__(self, query, gold: str):
        super().__init__(f"gold node {gold!r} has no gloss in the index")
        self.query = query
        self.gold = gold


class BuildMismatch(RetrievalError):
    def __init__(self, reason: str):
        super().__init__(reason)


class InvalidImage(RetrievalError):
    def __init__(self, reason: str):
        super().__init__(f"invalid image: {reason}")
        self.reason = reason


# --- corpus I/O ------------------------------------------------------------

class CorpusError(VsemError):
    pass


class FormatError(CorpusError):
    def __init__(self, file: str, line: int | None, reason: str):
        at = f"{file}:{line}" if line is not None else file
        super().__init__(f"{at}: {reason}")
        self.file = file
        self.line = line
        self.reason = reason


class InsufficientItems(CorpusError):
    def __init__(self, category: str, language: str | None, needed: int, available: int):
        where = f"{category}/{language}" if language else category
        super().__init__(f"not enough items in {where}: need {needed}, have {available}")
        self.category = category
        self.language = language
        self.needed = needed
        self.available = available
