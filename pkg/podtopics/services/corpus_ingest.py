"""Corpus ingestion: records, entity masking, tokenization, vocabulary and BoW matrix."""
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import AbstractSet, Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from pydantic import ValidationError
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS, CountVectorizer

from podtopics.exceptions import ConfigError, DataError
from podtopics.schemas.corpus import AnnotationField, EntityAnnotation, RawDocument
from podtopics.schemas.pipeline import PipelineConfig, PreprocessConfig

logger = logging.getLogger(__name__)

# Runs of Unicode letters; digits, underscores and punctuation separate tokens
TOKEN_PATTERN = re.compile(r"[^\W\d_]+")


@dataclass(frozen=True)
class Vocabulary:
    """Ordered unique terms with their column indices."""

    terms: tuple[str, ...]
    index: dict[str, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})
        if len(self.index) != len(self.terms):
            raise DataError("vocabulary contains duplicate terms")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: object) -> bool:
        return term in self.index


@dataclass
class AnnotationResult:
    """Accepted entities and the spans to mask, per document."""

    entities: dict[str, list[str]] = field(default_factory=dict)
    spans: dict[tuple[str, AnnotationField], list[tuple[int, int]]] = field(default_factory=dict)
    n_accepted: int = 0
    n_rejected: int = 0
    n_unknown: int = 0


@dataclass(frozen=True)
class Corpus:
    """Ingested corpus; every array is aligned with `doc_ids`."""

    doc_ids: tuple[str, ...]
    documents: tuple[np.ndarray, ...]
    vocabulary: Vocabulary
    entities: tuple[tuple[str, ...], ...]
    mention_counts: np.ndarray
    bow: sp.csr_matrix
    title_words: np.ndarray
    description_words: np.ndarray
    dropped: dict[str, int]

    @property
    def n_documents(self) -> int:
        return len(self.doc_ids)

    @property
    def entity_set(self) -> frozenset[str]:
        return frozenset(e for doc_entities in self.entities for e in doc_entities)


def read_word_list(path: Union[str, Path]) -> frozenset[str]:
    """
    Read a one-token-per-line UTF-8 word list.

    Args:
        path: Word list file

    Returns:
        Lowercased tokens, blank lines skipped

    Raises:
        DataError: If the file cannot be read
    """
    try:
        with open(path, encoding="utf-8") as fh:
            return frozenset(line.strip().lower() for line in fh if line.strip())
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read word list: {exc}", path=str(path)) from exc


def default_names() -> frozenset[str]:
    """The person-name filter list shipped with the package."""
    text = resources.files("podtopics.resources").joinpath("names.txt").read_text(encoding="utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


def preprocess_config(config: PipelineConfig) -> PreprocessConfig:
    """Resolve word lists and thresholds of a pipeline configuration."""
    stopwords = read_word_list(config.stopwords_path) if config.stopwords_path else frozenset(ENGLISH_STOP_WORDS)
    names = read_word_list(config.names_path) if config.names_path else default_names()
    return PreprocessConfig(
        stopwords=stopwords,
        names=names,
        min_term_freq=config.min_term_freq,
        min_confidence=config.min_confidence,
        min_doc_tokens=config.min_doc_tokens,
        dedup_titles=config.dedup_titles,
    )


def tokenize_text(text: str, stopwords: AbstractSet[str]) -> list[str]:
    """Lowercase alphabetic tokens longer than one character, stopwords removed."""
    return [tok for tok in TOKEN_PATTERN.findall(text.lower()) if len(tok) > 1 and tok not in stopwords]


def tokenize(raw: Union[RawDocument, str], config: PreprocessConfig) -> list[str]:
    """
    Tokenize a document (title and description, equally weighted) or a bare string.

    Args:
        raw: Document or text
        config: Preprocessing rules supplying the stopword list

    Returns:
        Token list, possibly empty
    """
    text = raw if isinstance(raw, str) else f"{raw.title}\n{raw.description}"
    return tokenize_text(text, config.stopwords)


def count_words(text: str) -> int:
    """Number of alphabetic words, stopwords included."""
    return len(TOKEN_PATTERN.findall(text))


def _iter_json_lines(path: Union[str, Path]) -> Iterable[tuple[int, dict]]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open file: {exc}", path=str(path)) from exc
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON: {exc.msg}", path=str(path), line_number=line_number) from exc
            if not isinstance(record, dict):
                raise DataError("expected a JSON object", path=str(path), line_number=line_number)
            yield line_number, record


def load_corpus(path: Union[str, Path]) -> list[RawDocument]:
    """
    Read a JSON-lines corpus file.

    Args:
        path: File with one {"id", "title", "description"} object per line

    Returns:
        Documents in file order

    Raises:
        DataError: On malformed lines, invalid records or duplicate ids
    """
    documents: list[RawDocument] = []
    seen: set[str] = set()
    for line_number, record in _iter_json_lines(path):
        try:
            document = RawDocument.model_validate(record)
        except ValidationError as exc:
            raise DataError(f"invalid document: {exc.errors()[0]['msg']}", path=str(path), line_number=line_number) from exc
        if document.id in seen:
            raise DataError(f"duplicate document id '{document.id}'", path=str(path), line_number=line_number)
        seen.add(document.id)
        documents.append(document)
    logger.info("Loaded %d documents from %s", len(documents), path)
    return documents


def read_annotations(path: Union[str, Path]) -> list[tuple[int, EntityAnnotation]]:
    """
    Read a JSON-lines entity annotation file.

    Returns:
        (line number, annotation) pairs in file order

    Raises:
        DataError: On the first malformed line, with its line number
    """
    annotations = []
    for line_number, record in _iter_json_lines(path):
        try:
            annotations.append((line_number, EntityAnnotation.model_validate(record)))
        except ValidationError as exc:
            raise DataError(f"invalid annotation: {exc.errors()[0]['msg']}", path=str(path), line_number=line_number) from exc
    return annotations


def accept_annotations(
    annotations: Sequence[Union[EntityAnnotation, tuple[int, EntityAnnotation]]],
    documents: Sequence[RawDocument],
    min_confidence: float,
) -> AnnotationResult:
    """
    Split annotations into accepted entities and discarded mentions.

    Confidence must be strictly higher than `min_confidence`. Accepted mention
    spans are recorded for masking; rejected spans stay ordinary text.

    Args:
        annotations: Annotations, optionally paired with their line numbers
        documents: Documents the annotations refer to
        min_confidence: Exclusive confidence threshold

    Returns:
        Accepted entities and spans per document with counters

    Raises:
        DataError: If a span lies outside its field
    """
    by_id = {doc.id: doc for doc in documents}
    result = AnnotationResult()
    for position, item in enumerate(annotations, start=1):
        line_number, annotation = item if isinstance(item, tuple) else (position, item)
        document = by_id.get(annotation.doc_id)
        if document is None:
            result.n_unknown += 1
            continue
        if annotation.end > len(document.field_text(annotation.field)):
            raise DataError(
                f"span {annotation.start}:{annotation.end} exceeds the {annotation.field.value} of '{annotation.doc_id}'",
                line_number=line_number,
            )
        if annotation.confidence <= min_confidence:
            result.n_rejected += 1
            continue
        result.n_accepted += 1
        result.entities.setdefault(annotation.doc_id, []).append(annotation.entity_id)
        result.spans.setdefault((annotation.doc_id, annotation.field), []).append((annotation.start, annotation.end))
    if result.n_unknown:
        logger.warning("Skipped %d annotations referring to unknown documents", result.n_unknown)
    logger.info(
        "Annotations: %d accepted, %d at or below confidence %.3f",
        result.n_accepted,
        result.n_rejected,
        min_confidence,
    )
    return result


def ingest_annotations(
    path: Optional[Union[str, Path]],
    min_confidence: float,
    documents: Sequence[RawDocument],
) -> AnnotationResult:
    """Read an annotation file and accept its high-confidence entities; no file means no entities."""
    if path is None:
        return AnnotationResult()
    return accept_annotations(read_annotations(path), documents, min_confidence)


def mask_spans(text: str, spans: Iterable[tuple[int, int]]) -> str:
    """Blank out character spans so their words never reach the tokenizer."""
    chars = list(text)
    for start, end in spans:
        chars[start:end] = " " * (end - start)
    return "".join(chars)


def build_vocabulary(
    tokenized_docs: Iterable[Sequence[str]],
    min_term_freq: int,
    name_list: AbstractSet[str] = frozenset(),
    excluded: AbstractSet[str] = frozenset(),
) -> Vocabulary:
    """
    Build the lexicographically sorted vocabulary.

    Args:
        tokenized_docs: Token lists
        min_term_freq: Minimum corpus frequency of a kept term
        name_list: Person names never admitted
        excluded: Further terms never admitted (lowercased entity ids)

    Returns:
        The vocabulary

    Raises:
        ConfigError: If min_term_freq < 1
        DataError: If no term survives the filters
    """
    if min_term_freq < 1:
        raise ConfigError(f"min_term_freq must be >= 1, got {min_term_freq}")
    counts = Counter(tok for tokens in tokenized_docs for tok in tokens)
    terms = sorted(
        t for t, c in counts.items()
        if c >= min_term_freq and t not in name_list and t not in excluded
    )
    if not terms:
        raise DataError("vocabulary is empty after frequency and name filtering")
    logger.info("Vocabulary: %d of %d distinct tokens kept", len(terms), len(counts))
    return Vocabulary(tuple(terms))


def _identity(tokens):
    return tokens


def build_bow(tokenized_docs: Sequence[Sequence[str]], vocab: Vocabulary) -> sp.csr_matrix:
    """
    Count in-vocabulary tokens per document.

    Args:
        tokenized_docs: Token lists
        vocab: Finalized vocabulary

    Returns:
        |D| x |V| CSR matrix of raw counts; out-of-vocabulary tokens are ignored
    """
    vectorizer = CountVectorizer(analyzer=_identity, vocabulary=vocab.index, dtype=np.int64)
    bow = vectorizer.transform(list(tokenized_docs)).tocsr()
    bow.sort_indices()
    return bow


def ingest_corpus(
    documents: Sequence[RawDocument],
    annotations: Sequence[Union[EntityAnnotation, tuple[int, EntityAnnotation]]],
    config: PreprocessConfig,
) -> Corpus:
    """
    Run the preprocessing chain over in-memory records.

    Documents with too few tokens are dropped first, then (optionally)
    duplicate titles; accepted entity mentions are masked before tokenization;
    documents ending with neither vocabulary terms nor entities are dropped.

    Args:
        documents: Raw documents
        annotations: Entity annotations
        config: Preprocessing rules

    Returns:
        The ingested corpus

    Raises:
        DataError: On duplicate ids, bad spans, or an empty result
    """
    ids = [doc.id for doc in documents]
    if len(set(ids)) != len(ids):
        raise DataError("document ids are not unique")
    dropped = {"too_short": 0, "duplicate_title": 0, "empty": 0}

    kept: list[RawDocument] = []
    seen_titles: set[str] = set()
    for doc in documents:
        if len(tokenize(doc, config)) <= config.min_doc_tokens:
            dropped["too_short"] += 1
            continue
        if config.dedup_titles:
            title_key = " ".join(doc.title.lower().split())
            if title_key in seen_titles:
                dropped["duplicate_title"] += 1
                continue
            seen_titles.add(title_key)
        kept.append(doc)

    # Resolved against every document: annotations of filtered documents are not unknown
    accepted = accept_annotations(annotations, documents, config.min_confidence)

    tokenized: list[list[str]] = []
    for doc in kept:
        title = mask_spans(doc.title, accepted.spans.get((doc.id, AnnotationField.TITLE), ()))
        description = mask_spans(doc.description, accepted.spans.get((doc.id, AnnotationField.DESCRIPTION), ()))
        tokenized.append(tokenize_text(f"{title}\n{description}", config.stopwords))

    entity_lists = [list(dict.fromkeys(accepted.entities.get(doc.id, ()))) for doc in kept]
    excluded = frozenset(e.lower() for entities in entity_lists for e in entities)
    vocab = build_vocabulary(tokenized, config.min_term_freq, config.names, excluded)
    bow = build_bow(tokenized, vocab)

    row_nnz = np.diff(bow.indptr)
    keep_rows = [i for i in range(len(kept)) if row_nnz[i] > 0 or entity_lists[i]]
    dropped["empty"] = len(kept) - len(keep_rows)
    if not keep_rows:
        raise DataError("no document has vocabulary terms or accepted entities")
    bow = bow[keep_rows].tocsr()

    documents_idx = tuple(
        np.fromiter((vocab.index[t] for t in tokenized[i] if t in vocab.index), dtype=np.int64)
        for i in keep_rows
    )
    corpus = Corpus(
        doc_ids=tuple(kept[i].id for i in keep_rows),
        documents=documents_idx,
        vocabulary=vocab,
        entities=tuple(tuple(entity_lists[i]) for i in keep_rows),
        mention_counts=np.array([len(accepted.entities.get(kept[i].id, ())) for i in keep_rows], dtype=np.int64),
        bow=bow,
        title_words=np.array([count_words(kept[i].title) for i in keep_rows], dtype=np.int64),
        description_words=np.array([count_words(kept[i].description) for i in keep_rows], dtype=np.int64),
        dropped=dropped,
    )
    logger.info(
        "Ingested %d documents (dropped: %s), |V|=%d, %d distinct entities",
        corpus.n_documents,
        ", ".join(f"{k}={v}" for k, v in dropped.items()),
        len(vocab),
        len(corpus.entity_set),
    )
    return corpus


def ingest(config: PipelineConfig) -> Corpus:
    """Read the configured corpus and annotation files and ingest them."""
    documents = load_corpus(config.corpus_path)
    annotations = read_annotations(config.annotations_path) if config.annotations_path else []
    return ingest_corpus(documents, annotations, preprocess_config(config))
