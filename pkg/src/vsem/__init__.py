"""Multilingual multimodal knowledge-graph construction and retrieval."""

from .embed import (
    EmbeddingProvider,
    ExternalProvider,
    HashProvider,
    VectorStore,
    cosine,
    dot,
    mock_provider,
    read_vectors,
    write_vectors,
)
from .errors import VsemError
from .kg import (
    LANGUAGES,
    Fact,
    Gloss,
    ImageRecord,
    KnowledgeGraph,
    Node,
    RelationType,
    map_relation_label,
)
from .pipeline import (
    ConstantScorer,
    FilterReport,
    KnowledgeSource,
    PipelineConfig,
    QualityScorer,
    SourceImage,
    SourceNode,
    TableScorer,
    expand,
)
from .retrieval import (
    EvalReport,
    GlossIndex,
    QueryResult,
    build_index,
    evaluate,
    retrieve_by_image,
    retrieve_by_sentence,
)
from .sources import DictSource, FileSource

__version__ = "0.1.0"

__all__ = [
    "ConstantScorer",
    "DictSource",
    "EmbeddingProvider",
    "EvalReport",
    "ExternalProvider",
    "Fact",
    "FileSource",
    "FilterReport",
    "Gloss",
    "GlossIndex",
    "HashProvider",
    "ImageRecord",
    "KnowledgeGraph",
    "KnowledgeSource",
    "LANGUAGES",
    "Node",
    "PipelineConfig",
    "QualityScorer",
    "QueryResult",
    "RelationType",
    "SourceImage",
    "SourceNode",
    "TableScorer",
    "VectorStore",
    "VsemError",
    "build_index",
    "cosine",
    "dot",
    "evaluate",
    "expand",
    "map_relation_label",
    "mock_provider",
    "read_vectors",
    "retrieve_by_image",
    "retrieve_by_sentence",
    "write_vectors",
    "__version__",
]
