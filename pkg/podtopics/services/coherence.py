"""NPMI and C_V topic coherence from sliding-window co-occurrence counts of a reference corpus."""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import AbstractSet, Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from podtopics.exceptions import ConfigError, DataError
from podtopics.schemas.report import CoherenceReport, TopicCoherence, TopicSummary
from podtopics.services.corpus_ingest import load_corpus, tokenize_text

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_SIZE = 110
# Added to joint probabilities before taking logs
SMOOTHING = 1e-12


@dataclass(frozen=True)
class CooccurrenceIndex:
    """Boolean sliding-window counts: windows per term and per unordered term pair."""

    terms: tuple[str, ...]
    term_counts: np.ndarray
    pairs: sp.csr_matrix
    window_count: int
    window_size: int
    restricted: bool = False
    index: dict[str, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})

    def term_count(self, term: str) -> int:
        i = self.index.get(term)
        return 0 if i is None else int(self.term_counts[i])

    def pair_count(self, a: str, b: str) -> int:
        if a == b:
            return self.term_count(a)
        i, j = self.index.get(a), self.index.get(b)
        if i is None or j is None:
            return 0
        i, j = min(i, j), max(i, j)
        return int(self.pairs[i, j])

    @property
    def term_window_counts(self) -> dict[str, int]:
        return {t: int(c) for t, c in zip(self.terms, self.term_counts) if c}

    @property
    def pair_window_counts(self) -> dict[tuple[str, str], int]:
        coo = self.pairs.tocoo()
        return {
            (self.terms[i], self.terms[j]): int(c)
            for i, j, c in zip(coo.row, coo.col, coo.data)
        }


def _count_document(ids: np.ndarray, window_size: int) -> tuple[int, np.ndarray, sp.csr_matrix]:
    """Windows of one document, the terms seen in it and their Boolean window incidence."""
    n_windows = max(len(ids) - window_size + 1, 1)
    positions = np.nonzero(ids >= 0)[0]
    if positions.size == 0:
        return n_windows, np.empty(0, dtype=np.int64), sp.csr_matrix((n_windows, 0), dtype=np.int64)
    distinct, column = np.unique(ids[positions], return_inverse=True)
    # A token at p lies in windows max(0, p-w+1) .. min(p, n_windows-1)
    first = np.maximum(positions - window_size + 1, 0)
    last = np.minimum(positions, n_windows - 1)
    spans = last - first + 1
    offsets = np.arange(spans.sum()) - np.repeat(np.cumsum(spans) - spans, spans)
    incidence = sp.csr_matrix(
        (np.ones(offsets.size, dtype=np.int64), (np.repeat(first, spans) + offsets, np.repeat(column, spans))),
        shape=(n_windows, len(distinct)),
    )
    incidence.sum_duplicates()
    incidence.data[:] = 1
    return n_windows, distinct, incidence


def _count_chunk(
    documents: Sequence[np.ndarray],
    n_terms: int,
    window_size: int,
) -> tuple[int, np.ndarray, sp.csr_matrix]:
    window_count = 0
    term_counts = np.zeros(n_terms, dtype=np.int64)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for ids in documents:
        if ids.size == 0:
            continue
        n_windows, distinct, incidence = _count_document(ids, window_size)
        window_count += n_windows
        if distinct.size == 0:
            continue
        term_counts[distinct] += np.asarray(incidence.sum(axis=0), dtype=np.int64).ravel()
        joint = sp.triu(incidence.T.tocsr() @ incidence, k=1).tocoo()
        rows.append(distinct[joint.row])
        cols.append(distinct[joint.col])
        vals.append(joint.data.astype(np.int64))
    if rows:
        pairs = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_terms, n_terms),
        ).tocsr()
    else:
        pairs = sp.csr_matrix((n_terms, n_terms), dtype=np.int64)
    return window_count, term_counts, pairs


def build_index(
    reference: Iterable[Sequence[str]],
    window_size: int = DEFAULT_WINDOW_SIZE,
    restrict_to: Optional[AbstractSet[str]] = None,
    workers: int = 1,
) -> CooccurrenceIndex:
    """
    Count Boolean sliding windows over a tokenized reference corpus.

    Windows of `window_size` tokens step by one; a document shorter than the
    window is a single window and empty documents contribute none. Each term
    and each pair is counted at most once per window.

    Args:
        reference: Token lists
        window_size: Window width in tokens
        restrict_to: Only count these terms; other tokens still occupy positions
        workers: Threads counting document chunks

    Returns:
        The index

    Raises:
        ConfigError: If window_size < 1
        DataError: If the reference has no tokens
    """
    if window_size < 1:
        raise ConfigError(f"window_size must be >= 1, got {window_size}")
    reference = [list(doc) for doc in reference]
    if restrict_to is None:
        terms = tuple(sorted({tok for doc in reference for tok in doc}))
    else:
        terms = tuple(sorted(restrict_to))
    lookup = {t: i for i, t in enumerate(terms)}
    encoded = [np.array([lookup.get(tok, -1) for tok in doc], dtype=np.int64) for doc in reference]

    n_chunks = max(1, min(workers, len(encoded)))
    chunks = [encoded[i::n_chunks] for i in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=n_chunks) as pool:
        parts = list(pool.map(lambda chunk: _count_chunk(chunk, len(terms), window_size), chunks))
    window_count = sum(p[0] for p in parts)
    if window_count < 1:
        raise DataError("reference corpus has no tokens")
    term_counts = np.sum([p[1] for p in parts], axis=0)
    pairs = parts[0][2]
    for part in parts[1:]:
        pairs = pairs + part[2]
    pairs = sp.csr_matrix(pairs, dtype=np.int64)
    pairs.sort_indices()
    logger.info(
        "Co-occurrence index: %d documents, %d windows of %d, %d terms, %d pairs",
        len(reference),
        window_count,
        window_size,
        len(terms),
        pairs.nnz,
    )
    return CooccurrenceIndex(
        terms=terms,
        term_counts=term_counts,
        pairs=pairs,
        window_count=window_count,
        window_size=window_size,
        restricted=restrict_to is not None,
    )


def load_reference(
    path: Union[str, Path],
    stopwords: AbstractSet[str] = ENGLISH_STOP_WORDS,
    corpus_format: Optional[bool] = None,
) -> list[list[str]]:
    """
    Read and tokenize a reference corpus.

    In the corpus format (the default for `.jsonl` files) each record's title
    and description form one document; otherwise each line is a document.

    Raises:
        DataError: If the file cannot be read
    """
    if corpus_format is None:
        corpus_format = Path(path).suffix == ".jsonl"
    if corpus_format:
        return [tokenize_text(f"{doc.title}\n{doc.description}", stopwords) for doc in load_corpus(path)]
    try:
        with open(path, encoding="utf-8") as fh:
            return [tokenize_text(line, stopwords) for line in fh if line.strip()]
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read reference corpus: {exc}", path=str(path)) from exc


def save_index(index: CooccurrenceIndex, path: Union[str, Path]) -> None:
    np.savez(
        path,
        terms=np.array(index.terms, dtype=str),
        term_counts=index.term_counts,
        pair_data=index.pairs.data,
        pair_indices=index.pairs.indices,
        pair_indptr=index.pairs.indptr,
        window_count=index.window_count,
        window_size=index.window_size,
        restricted=index.restricted,
    )


def load_index(path: Union[str, Path]) -> CooccurrenceIndex:
    with np.load(path, allow_pickle=False) as data:
        terms = tuple(str(t) for t in data["terms"])
        pairs = sp.csr_matrix(
            (data["pair_data"], data["pair_indices"], data["pair_indptr"]),
            shape=(len(terms), len(terms)),
        )
        return CooccurrenceIndex(
            terms=terms,
            term_counts=data["term_counts"],
            pairs=pairs,
            window_count=int(data["window_count"]),
            window_size=int(data["window_size"]),
            restricted=bool(data["restricted"]),
        )


def npmi(index: CooccurrenceIndex, t_i: str, t_j: str) -> float:
    """
    Normalized pointwise mutual information of two terms.

    Zero-count terms score 0. A term with itself scores 1, as does a pair
    present in every window.

    Args:
        index: Co-occurrence counts
        t_i: First term
        t_j: Second term

    Returns:
        NPMI in [-1, 1] up to smoothing
    """
    count_i, count_j = index.term_count(t_i), index.term_count(t_j)
    if count_i == 0 or count_j == 0:
        return 0.0
    if t_i == t_j:
        return 1.0
    n = index.window_count
    p_i, p_j = count_i / n, count_j / n
    p_ij = index.pair_count(t_i, t_j) / n + SMOOTHING
    denominator = -math.log(p_ij)
    if denominator <= 0.0:
        return 1.0
    return math.log(p_ij / (p_i * p_j)) / denominator


def npmi_matrix(index: CooccurrenceIndex, terms: Sequence[str]) -> np.ndarray:
    """T x T matrix of pairwise NPMI, self-pairs included."""
    n_terms = len(terms)
    matrix = np.zeros((n_terms, n_terms))
    for i in range(n_terms):
        for j in range(i, n_terms):
            matrix[i, j] = matrix[j, i] = npmi(index, terms[i], terms[j])
    return matrix


def topic_coherence(index: CooccurrenceIndex, terms: Sequence[str], topic_id: int = 0) -> TopicCoherence:
    """
    C_V of one topic with its NPMI matrix and diagnostics.

    Each term's NPMI vector against all T terms is compared by cosine with
    the sum of all T vectors; C_V is the mean. A zero-norm vector
    contributes 0 and is flagged.

    Raises:
        ConfigError: If fewer than two terms are given
    """
    terms = list(terms)
    if len(terms) < 2:
        raise ConfigError(f"C_V needs at least 2 terms, got {len(terms)}")
    matrix = npmi_matrix(index, terms)
    total = matrix.sum(axis=0)
    total_norm = np.linalg.norm(total)
    cosines = np.zeros(len(terms))
    zero_norm = []
    for i, term in enumerate(terms):
        norm = np.linalg.norm(matrix[i])
        if norm == 0.0 or total_norm == 0.0:
            zero_norm.append(term)
            continue
        cosines[i] = float(np.dot(matrix[i], total) / (norm * total_norm))
    return TopicCoherence(
        topic_id=topic_id,
        terms=terms,
        cv=float(np.clip(cosines.mean(), -1.0, 1.0)),
        npmi=matrix.tolist(),
        missing_terms=[t for t in terms if index.term_count(t) == 0],
        zero_norm_terms=zero_norm,
    )


def cv_topic(index: CooccurrenceIndex, top_terms: Sequence[str]) -> float:
    """C_V coherence of a list of top terms."""
    return topic_coherence(index, top_terms).cv


def score_model(
    index: CooccurrenceIndex,
    summaries: Sequence[TopicSummary],
    workers: int = 1,
) -> CoherenceReport:
    """
    Score every topic and average.

    Args:
        index: Co-occurrence counts of the reference corpus
        summaries: Top words per topic
        workers: Threads scoring topics concurrently

    Returns:
        Per-topic scores, the arithmetic mean and missing-term diagnostics

    Raises:
        ConfigError: If there are no topics
    """
    if not summaries:
        raise ConfigError("no topics to score")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        topics = list(pool.map(lambda s: topic_coherence(index, s.terms, s.topic_id), summaries))
    missing = sorted({t for topic in topics for t in topic.missing_terms})
    if missing:
        logger.warning("%d top words never occur in the reference corpus", len(missing))
    mean_cv = float(np.mean([topic.cv for topic in topics]))
    logger.info("Mean C_V over %d topics: %.4f", len(topics), mean_cv)
    return CoherenceReport(
        topics=topics,
        mean_cv=mean_cv,
        window_size=index.window_size,
        window_count=index.window_count,
        missing_terms=missing,
    )


def report_json(report: CoherenceReport) -> str:
    """Sorted, indented JSON so equal reports serialize to equal bytes."""
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
