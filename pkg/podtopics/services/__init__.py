"""Pipeline stages."""
from podtopics.services import (
    corpus_ingest,
    embedding_store,
    representation,
    factorization,
    coherence,
    registry,
    synth,
    pipeline,
)

__all__ = [
    "corpus_ingest",
    "embedding_store",
    "representation",
    "factorization",
    "coherence",
    "registry",
    "synth",
    "pipeline",
]
