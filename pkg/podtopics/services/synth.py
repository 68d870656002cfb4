"""Planted-topic corpus generator with matching embeddings, annotations and reference text."""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from podtopics.schemas.corpus import AnnotationField, EntityAnnotation, RawDocument
from podtopics.schemas.report import TopicSummary
from podtopics.schemas.synth import SynthOptions
from podtopics.services.embedding_store import DEFAULT_ENTITY_PREFIX, EmbeddingTable

logger = logging.getLogger(__name__)

# Alphabetic stems: the tokenizer drops digits, so block terms carry letter suffixes
STEMS = (
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india",
    "juliett", "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo",
    "sierra", "tango", "uniform", "victor", "whiskey", "xray", "yankee", "zulu",
)
TITLE_TOKENS = 3


@dataclass(frozen=True)
class SyntheticCorpus:
    """A generated corpus with its ground truth."""

    documents: list[RawDocument]
    annotations: list[EntityAnnotation]
    embeddings: EmbeddingTable
    reference: list[str]
    blocks: list[list[str]]
    labels: dict[str, int]
    options: SynthOptions


def _suffix(j: int) -> str:
    letters = ""
    j += 1
    while j:
        j, rem = divmod(j - 1, 26)
        letters = chr(ord("a") + rem) + letters
    return letters


def block_terms(n_blocks: int, terms_per_block: int) -> list[list[str]]:
    """Disjoint term lists, e.g. block 0 = alphaa, alphab, ..."""
    return [[f"{STEMS[b]}{_suffix(j)}" for j in range(terms_per_block)] for b in range(n_blocks)]


def entity_id(block: int) -> str:
    return f"{STEMS[block].capitalize()}_Entity"


def entity_mention(block: int) -> str:
    return f"{STEMS[block].capitalize()} Entity"


def _draw_tokens(rng: np.random.Generator, blocks: list[list[str]], block: int, length: int, mixing: float) -> list[str]:
    n_foreign = int(round(mixing * length))
    others = [b for b in range(len(blocks)) if b != block]
    tokens = [blocks[block][i] for i in rng.integers(0, len(blocks[block]), size=length - n_foreign)]
    for _ in range(n_foreign):
        other = others[int(rng.integers(0, len(others)))]
        tokens.append(blocks[other][int(rng.integers(0, len(blocks[other])))])
    rng.shuffle(tokens)
    return tokens


def generate(options: SynthOptions) -> SyntheticCorpus:
    """
    Generate a planted corpus.

    Every document belongs to one block; a `mixing` share of its tokens is
    drawn from the other blocks, so only its entity (present with
    probability `entity_rate`) names the true block. Word and entity vectors
    are the block's one-hot centroid plus Gaussian noise. The reference text
    holds clean single-block documents.

    Args:
        options: Corpus shape and seed

    Returns:
        Documents, annotations, embeddings, reference and ground truth
    """
    rng = np.random.default_rng(options.seed)
    blocks = block_terms(options.n_blocks, options.terms_per_block)
    centroids = np.eye(options.n_blocks, options.dim)

    word_vectors = {
        term: centroids[b] + options.noise * rng.standard_normal(options.dim)
        for b, terms in enumerate(blocks)
        for term in terms
    }
    entity_vectors = {
        entity_id(b): centroids[b] + options.noise * rng.standard_normal(options.dim)
        for b in range(options.n_blocks)
    }

    documents: list[RawDocument] = []
    annotations: list[EntityAnnotation] = []
    labels: dict[str, int] = {}
    for i in range(options.n_docs):
        doc_id = f"doc{_suffix(i)}"
        block = int(rng.integers(0, options.n_blocks))
        tokens = _draw_tokens(rng, blocks, block, options.doc_length, options.mixing)
        title_words = tokens[:TITLE_TOKENS]
        if rng.random() < options.entity_rate:
            mention = entity_mention(block)
            annotations.append(EntityAnnotation(
                doc_id=doc_id,
                field=AnnotationField.TITLE,
                start=0,
                end=len(mention),
                entity_id=entity_id(block),
                confidence=options.entity_confidence,
            ))
            title_words = [mention, *title_words]
        documents.append(RawDocument(
            id=doc_id,
            title=" ".join(title_words),
            description=" ".join(tokens[TITLE_TOKENS:]),
        ))
        labels[doc_id] = block

    reference = []
    for _ in range(options.n_reference_docs):
        block = int(rng.integers(0, options.n_blocks))
        reference.append(" ".join(_draw_tokens(rng, blocks, block, options.doc_length, 0.0)))

    logger.info(
        "Generated %d documents over %d blocks (%d annotated, mixing %.2f)",
        len(documents),
        options.n_blocks,
        len(annotations),
        options.mixing,
    )
    return SyntheticCorpus(
        documents=documents,
        annotations=annotations,
        embeddings=EmbeddingTable.from_vectors(word_vectors, entity_vectors),
        reference=reference,
        blocks=blocks,
        labels=labels,
        options=options,
    )


def write_synthetic(
    corpus: SyntheticCorpus,
    directory: Union[str, Path],
    entity_prefix: str = DEFAULT_ENTITY_PREFIX,
) -> dict[str, Path]:
    """
    Write corpus.jsonl, annotations.jsonl, embeddings.txt, reference.txt and truth.json.

    Returns:
        File role to path
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": directory / "corpus.jsonl",
        "annotations": directory / "annotations.jsonl",
        "embeddings": directory / "embeddings.txt",
        "reference": directory / "reference.txt",
        "truth": directory / "truth.json",
    }
    with open(paths["corpus"], "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(json.dumps(doc.model_dump(mode="json")) + "\n")
    with open(paths["annotations"], "w", encoding="utf-8") as fh:
        for annotation in corpus.annotations:
            fh.write(json.dumps(annotation.model_dump(mode="json")) + "\n")

    table = corpus.embeddings
    rows = [(term, vec) for term, vec in sorted(table.word_vectors.items())]
    rows += [(f"{entity_prefix}{e}", vec) for e, vec in sorted(table.entity_vectors.items())]
    with open(paths["embeddings"], "w", encoding="utf-8") as fh:
        fh.write(f"{len(rows)} {table.dim}\n")
        for token, vec in rows:
            fh.write(token + " " + " ".join(f"{v:.8f}" for v in vec) + "\n")

    paths["reference"].write_text("".join(f"{line}\n" for line in corpus.reference), encoding="utf-8")
    truth = {"blocks": corpus.blocks, "labels": corpus.labels, "options": corpus.options.model_dump(mode="json")}
    paths["truth"].write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def topic_purity(summary: TopicSummary, blocks: Sequence[Sequence[str]]) -> float:
    """Share of a topic's top words belonging to its dominant planted block."""
    terms = summary.terms
    if not terms:
        return 0.0
    return max(sum(t in set(block) for t in terms) for block in blocks) / len(terms)
