"""Weighted document-term matrices: TF-IDF, CluWords and the entity-boosted NEiCE variant."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from sklearn.preprocessing import normalize

from podtopics.exceptions import ConfigError, NumericalError
from podtopics.models.run import RepresentationKind
from podtopics.services.corpus_ingest import Corpus
from podtopics.services.embedding_store import SimilarityMatrix
from podtopics.utils.matrix_io import write_triplets

logger = logging.getLogger(__name__)

# Stored entries below this are numerical noise
PRUNE_BELOW = 1e-12


@dataclass(frozen=True)
class WeightedDocTermMatrix:
    """Nonnegative |D| x |V| matrix handed to the factorization."""

    matrix: sp.csr_matrix
    kind: RepresentationKind
    params: dict[str, Any] = field(default_factory=dict)
    terms: tuple[str, ...] = ()

    def __post_init__(self):
        if self.terms and self.matrix.shape[1] != len(self.terms):
            raise NumericalError(f"matrix has {self.matrix.shape[1]} columns for {len(self.terms)} terms")
        if not np.all(np.isfinite(self.matrix.data)):
            raise NumericalError(f"{self.kind.value} matrix has non-finite entries")
        if self.matrix.nnz and self.matrix.data.min() < 0:
            raise NumericalError(f"{self.kind.value} matrix has negative entries")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True)
class MeanSimilarityAccumulator:
    """mu(t, d) and |V^{d,t}| for every document and term, stored on the same sparse pattern."""

    mu: sp.csr_matrix
    counts: sp.csr_matrix

    def mu_at(self, d: int, t: int) -> float:
        return float(self.mu[d, t])

    def count_at(self, d: int, t: int) -> int:
        return int(self.counts[d, t])

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.mu.sum(axis=0)).ravel()


def _prune(matrix: sp.spmatrix) -> sp.csr_matrix:
    matrix = sp.csr_matrix(matrix, dtype=np.float64)
    matrix.data[matrix.data < PRUNE_BELOW] = 0.0
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return matrix


def _scale_columns(matrix: sp.spmatrix, weights: np.ndarray) -> sp.csr_matrix:
    return _prune(sp.csr_matrix(matrix) @ sp.diags(weights))


def _binary(A: sp.spmatrix) -> sp.csr_matrix:
    B = sp.csr_matrix(A, dtype=np.float64, copy=True)
    B.eliminate_zeros()
    B.data[:] = 1.0
    return B


def _check_shapes(A: sp.spmatrix, C: sp.spmatrix) -> None:
    if C.shape != (A.shape[1], A.shape[1]):
        raise NumericalError(f"similarity matrix {C.shape} does not match {A.shape[1]} vocabulary columns")


def tf_idf(A: sp.spmatrix) -> sp.csr_matrix:
    """
    Classic TF-IDF: A[d, t] * log(|D| / n_t).

    Args:
        A: Raw BoW counts

    Returns:
        Weighted matrix with zero weights pruned

    Raises:
        NumericalError: If a term occurs in no document
    """
    B = _binary(A)
    n_docs = B.shape[0]
    doc_freq = np.asarray(B.sum(axis=0)).ravel()
    if np.any(doc_freq == 0):
        raise NumericalError(f"{int(np.sum(doc_freq == 0))} vocabulary terms occur in no document")
    return _scale_columns(A, np.log(n_docs / doc_freq))


def tf_star(A: sp.spmatrix, C: sp.spmatrix) -> sp.csr_matrix:
    """Expanded term frequency AC."""
    _check_shapes(A, C)
    AC = (sp.csr_matrix(A, dtype=np.float64) @ sp.csr_matrix(C)).tocsr()
    AC.sort_indices()
    return AC


def mean_similarity(A: sp.spmatrix, C: sp.spmatrix) -> MeanSimilarityAccumulator:
    """
    Mean similarity of every term to the related tokens of every document.

    With B the binary incidence of A, B C sums C[t, t'] over the distinct
    tokens t' of d and B support(C) counts them. C is symmetric, so row and
    column sums agree.

    Args:
        A: BoW counts
        C: Similarity matrix on the same vocabulary

    Returns:
        mu and |V^{d,t}|, zero exactly where no token of d relates to t
    """
    _check_shapes(A, C)
    B = _binary(A)
    C = sp.csr_matrix(C, dtype=np.float64)
    support = C.copy()
    support.data[:] = 1.0
    totals = (B @ C).tocsr()
    counts = (B @ support).tocsr()
    totals.sort_indices()
    counts.sort_indices()
    mu = totals.multiply(counts.power(-1)).tocsr()
    mu.sort_indices()
    return MeanSimilarityAccumulator(mu=mu, counts=counts)


def compute_mu(A: sp.spmatrix, C: sp.spmatrix, d: int, t: int) -> float:
    """
    mu(t, d) for one pair: mean of C[t, t'] over tokens t' of d with C[t, t'] != 0.

    Returns:
        The mean, or 0 when no token of d relates to t
    """
    tokens = sp.csr_matrix(A)[d].indices
    row = sp.csr_matrix(C)[t].toarray().ravel()[tokens]
    related = row[row != 0]
    return float(related.mean()) if related.size else 0.0


def idf_star(accumulator: MeanSimilarityAccumulator, n_docs: int) -> np.ndarray:
    """
    Similarity-aware inverse document frequency log(|D| / sum_d mu(t, d)).

    Raises:
        NumericalError: If some term relates to no document at all
    """
    sums = accumulator.column_sums()
    if np.any(sums <= 0):
        raise NumericalError(f"{int(np.sum(sums <= 0))} terms have zero mean similarity in every document")
    return np.maximum(np.log(n_docs / sums), 0.0)


def cluwords(
    A: sp.spmatrix,
    C: sp.spmatrix,
    accumulator: Optional[MeanSimilarityAccumulator] = None,
) -> sp.csr_matrix:
    """
    CluWords weights (AC)[d, t] * idf*(t).

    Args:
        A: BoW counts
        C: Similarity matrix
        accumulator: Precomputed mean similarities, computed when omitted

    Returns:
        Weighted matrix
    """
    accumulator = accumulator or mean_similarity(A, C)
    return _scale_columns(tf_star(A, C), idf_star(accumulator, A.shape[0]))


def _document_boosts(
    A: sp.csr_matrix,
    C: sp.csr_matrix,
    AC: sp.csr_matrix,
    docs: Sequence[int],
    entities_per_doc: Sequence[Sequence[str]],
    entity_related: Mapping[str, np.ndarray],
) -> tuple[list[int], list[int], list[float]]:
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for d in docs:
        related_sets = [entity_related[e] for e in entities_per_doc[d] if e in entity_related]
        related_sets = [r for r in related_sets if r.size]
        tokens = A.indices[A.indptr[d]:A.indptr[d + 1]]
        if not related_sets or tokens.size == 0:
            continue
        # Union: a term related to several entities of d is boosted once
        targets = np.unique(np.concatenate(related_sets))
        scratch = AC[d].toarray().ravel()
        weights = C[targets][:, tokens].tocsr()
        weights.data = scratch[tokens][weights.indices]
        best = weights.max(axis=1).toarray().ravel()
        hit = best > 0
        rows.extend([d] * int(hit.sum()))
        cols.extend(targets[hit].tolist())
        vals.extend(best[hit].tolist())
    return rows, cols, vals


def neice(
    A: sp.spmatrix,
    C: sp.spmatrix,
    entities_per_doc: Sequence[Sequence[str]],
    entity_related: Mapping[str, np.ndarray],
    accumulator: Optional[MeanSimilarityAccumulator] = None,
    workers: int = 1,
) -> sp.csr_matrix:
    """
    Entity-boosted CluWords weights.

    For a term t related to some accepted, embedded entity of d and to at
    least one token of d, the expanded frequency gains the largest (AC)[d, t']
    over the tokens t' of d related to t. The idf factor is CluWords' idf*.

    Args:
        A: BoW counts
        C: Similarity matrix
        entities_per_doc: Accepted entity ids, aligned with the rows of A
        entity_related: Entity id to the term indices of its related words;
            entities missing here are unembedded and boost nothing
        accumulator: Precomputed mean similarities
        workers: Threads computing document boosts

    Returns:
        Weighted matrix, entrywise at least the CluWords matrix
    """
    A = sp.csr_matrix(A)
    A.sort_indices()
    C = sp.csr_matrix(C)
    if len(entities_per_doc) != A.shape[0]:
        raise NumericalError(f"{len(entities_per_doc)} entity lists for {A.shape[0]} documents")
    accumulator = accumulator or mean_similarity(A, C)
    AC = tf_star(A, C)

    docs = [d for d in range(A.shape[0]) if entities_per_doc[d]]
    n_chunks = max(1, min(workers, len(docs)))
    chunks = [docs[i::n_chunks] for i in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=n_chunks) as pool:
        parts = list(pool.map(
            lambda chunk: _document_boosts(A, C, AC, chunk, entities_per_doc, entity_related),
            chunks,
        ))
    rows = [r for part in parts for r in part[0]]
    cols = [c for part in parts for c in part[1]]
    vals = [v for part in parts for v in part[2]]

    tf_ne = AC
    if rows:
        tf_ne = (AC + sp.csr_matrix((vals, (rows, cols)), shape=AC.shape)).tocsr()
    logger.info("Entity boost raised %d entries in %d documents", len(rows), len(set(rows)))
    return _scale_columns(tf_ne, idf_star(accumulator, A.shape[0]))


def build_representation(
    kind: RepresentationKind,
    corpus: Corpus,
    similarity: Optional[SimilarityMatrix] = None,
    entity_related: Optional[Mapping[str, np.ndarray]] = None,
    alpha_ent: Optional[float] = None,
    normalize_rows: bool = False,
    workers: int = 1,
) -> WeightedDocTermMatrix:
    """
    Build the matrix of the requested kind for a corpus.

    Args:
        kind: tfidf, cluwords or neice
        corpus: Ingested corpus
        similarity: C, required unless kind is tfidf
        entity_related: Entity to related term indices, used by neice
        alpha_ent: Entity cutoff recorded in the parameters
        normalize_rows: L2-normalize every row afterwards
        workers: Threads for the entity boost

    Returns:
        The weighted matrix with its kind, parameters and terms

    Raises:
        ConfigError: If a similarity-based kind has no similarity matrix
    """
    kind = RepresentationKind(kind)
    params: dict[str, Any] = {}
    if kind is RepresentationKind.TFIDF:
        matrix = tf_idf(corpus.bow)
    else:
        if similarity is None:
            raise ConfigError(f"representation '{kind.value}' needs a similarity matrix")
        params["alpha_word"] = similarity.alpha_word
        if kind is RepresentationKind.CLUWORDS:
            matrix = cluwords(corpus.bow, similarity.matrix)
        else:
            params["alpha_ent"] = alpha_ent
            matrix = neice(corpus.bow, similarity.matrix, corpus.entities, entity_related or {}, workers=workers)
    if normalize_rows:
        matrix = normalize(matrix, norm="l2", axis=1, copy=False).tocsr()
        params["normalize_rows"] = True
    logger.info("Representation %s: %dx%d, nnz=%d", kind.value, matrix.shape[0], matrix.shape[1], matrix.nnz)
    return WeightedDocTermMatrix(matrix=matrix, kind=kind, params=params, terms=corpus.vocabulary.terms)


def dump_representation(
    representation: WeightedDocTermMatrix,
    directory: Union[str, Path],
    accumulator: Optional[MeanSimilarityAccumulator] = None,
) -> list[Path]:
    """Write the matrix (and mu, when given) as triplet text files for offline comparison."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = [directory / f"{representation.kind.value}.triplets"]
    write_triplets(representation.matrix, written[0])
    if accumulator is not None:
        written.append(directory / "mu.triplets")
        write_triplets(accumulator.mu, written[1])
    return written
