"""Joint word/entity embeddings, cosine queries and the thresholded similarity matrix C."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import AbstractSet, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from podtopics.exceptions import DataError, NumericalError
from podtopics.services.corpus_ingest import Vocabulary

logger = logging.getLogger(__name__)

DEFAULT_ENTITY_PREFIX = "ENTITY/"
DEFAULT_BLOCK_SIZE = 512


def entity_key(entity_id: str) -> str:
    """Canonical entity id: linkers and embedding dumps disagree on spaces vs underscores."""
    return entity_id.strip().replace(" ", "_")


@dataclass(frozen=True)
class EmbeddingTable:
    """Word and entity vectors of one dimension; missing keys read as None."""

    dim: int
    word_vectors: dict[str, np.ndarray]
    entity_vectors: dict[str, np.ndarray]
    coverage: dict[str, float] = field(default_factory=dict, compare=False)

    def word(self, term: str) -> Optional[np.ndarray]:
        return self.word_vectors.get(term)

    def entity(self, entity_id: str) -> Optional[np.ndarray]:
        return self.entity_vectors.get(entity_key(entity_id))

    @classmethod
    def from_vectors(
        cls,
        words: Mapping[str, Sequence[float]],
        entities: Optional[Mapping[str, Sequence[float]]] = None,
    ) -> "EmbeddingTable":
        """
        Build a table from in-memory vectors.

        Raises:
            DataError: On ragged dimensions or non-finite values
        """
        entities = entities or {}
        vectors = [np.asarray(v, dtype=np.float64) for v in (*words.values(), *entities.values())]
        if not vectors:
            raise DataError("embedding table needs at least one vector")
        dim = vectors[0].shape[0]
        word_vectors: dict[str, np.ndarray] = {}
        entity_vectors: dict[str, np.ndarray] = {}
        for target, source in ((word_vectors, words), (entity_vectors, entities)):
            for key, value in source.items():
                vector = np.asarray(value, dtype=np.float64)
                if vector.shape != (dim,):
                    raise DataError(f"vector for '{key}' has shape {vector.shape}, expected ({dim},)")
                if not np.all(np.isfinite(vector)):
                    raise DataError(f"vector for '{key}' has non-finite values")
                if not np.any(vector):
                    logger.warning("Skipping zero-norm vector for '%s'", key)
                    continue
                target[entity_key(key) if target is entity_vectors else key] = vector
        return cls(dim=dim, word_vectors=word_vectors, entity_vectors=entity_vectors)


@dataclass(frozen=True)
class SimilarityMatrix:
    """Sparse |V| x |V| matrix of cosines above alpha_word, unit diagonal."""

    matrix: sp.csr_matrix
    alpha_word: float

    @property
    def nnz(self) -> int:
        return self.matrix.nnz


def _split_row(
    parts: list[str], dim: int, path: str, line_number: int, entity_prefix: Optional[str] = None
) -> tuple[str, list[str]]:
    if len(parts) == dim + 1:
        return parts[0], parts[1:]
    if len(parts) > dim + 1:
        # Entity titles may contain spaces and end in a number, e.g. "ENTITY/Apollo 11"
        if entity_prefix and parts[0].startswith(entity_prefix):
            return " ".join(parts[:-dim]), parts[-dim:]
        try:
            float(parts[-dim - 1])
        except ValueError:
            return " ".join(parts[:-dim]), parts[-dim:]
    raise DataError(f"row has {len(parts) - 1} values, header declares {dim}", path=path, line_number=line_number)


def load_embeddings(
    path: Union[str, Path],
    vocab: Vocabulary,
    entities: AbstractSet[str],
    entity_prefix: Optional[str] = DEFAULT_ENTITY_PREFIX,
) -> EmbeddingTable:
    """
    Load a word2vec-style text file, keeping only vectors the corpus needs.

    With an entity prefix, tokens starting with it name entities; without one,
    a token equal to an accepted entity id is read as that entity.

    Args:
        path: File with a "count dim" header then "token v1 ... v_dim" rows
        vocab: Vocabulary whose terms are retained
        entities: Accepted entity ids whose vectors are retained
        entity_prefix: Reserved entity token prefix, or None

    Returns:
        The filtered table with coverage statistics

    Raises:
        DataError: On header or row dimension mismatches, non-finite values,
            or when no vocabulary term is embedded
    """
    path_str = str(path)
    wanted_entities = {entity_key(e) for e in entities}
    word_vectors: dict[str, np.ndarray] = {}
    entity_vectors: dict[str, np.ndarray] = {}
    zero_norm = 0
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open embeddings: {exc}", path=path_str) from exc
    with fh:
        header = fh.readline().split()
        try:
            if len(header) != 2:
                raise ValueError
            _, dim = int(header[0]), int(header[1])
        except ValueError:
            raise DataError("expected a 'count dim' header", path=path_str, line_number=1) from None
        for line_number, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            token, values = _split_row(parts, dim, path_str, line_number, entity_prefix)
            if entity_prefix and token.startswith(entity_prefix):
                key = entity_key(token[len(entity_prefix):])
                targets = [entity_vectors] if key in wanted_entities else []
            else:
                key = token
                targets = [word_vectors] if token in vocab else []
                if entity_prefix is None and entity_key(token) in wanted_entities:
                    targets.append(entity_vectors)
            if not targets:
                continue
            try:
                vector = np.asarray(values, dtype=np.float64)
            except ValueError:
                raise DataError(f"non-numeric value for '{token}'", path=path_str, line_number=line_number) from None
            if not np.all(np.isfinite(vector)):
                raise DataError(f"non-finite value for '{token}'", path=path_str, line_number=line_number)
            if not np.any(vector):
                zero_norm += 1
                continue
            for target in targets:
                target[entity_key(key) if target is entity_vectors else key] = vector

    if zero_norm:
        logger.warning("Skipped %d zero-norm vectors", zero_norm)
    if not word_vectors:
        raise DataError("no vocabulary term has an embedding", path=path_str)
    coverage = {
        "words": len(word_vectors) / len(vocab),
        "entities": len(entity_vectors) / len(wanted_entities) if wanted_entities else 1.0,
    }
    logger.info(
        "Embeddings: %.1f%% of |V|=%d and %.1f%% of |E|=%d covered (dim %d)",
        100 * coverage["words"],
        len(vocab),
        100 * coverage["entities"],
        len(wanted_entities),
        dim,
    )
    return EmbeddingTable(dim=dim, word_vectors=word_vectors, entity_vectors=entity_vectors, coverage=coverage)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """
    Cosine similarity of two vectors.

    Raises:
        NumericalError: On unequal dimensions or a zero-norm vector
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise NumericalError(f"cosine of vectors with shapes {u.shape} and {v.shape}")
    norm_u, norm_v = np.linalg.norm(u), np.linalg.norm(v)
    if norm_u == 0.0 or norm_v == 0.0:
        raise NumericalError("cosine of a zero-norm vector")
    return float(np.dot(u, v) / (norm_u * norm_v))


def _unit_rows(vectors: Iterable[np.ndarray], dim: int) -> np.ndarray:
    matrix = np.array(list(vectors), dtype=np.float64).reshape(-1, dim)
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def _embedded_terms(table: EmbeddingTable, vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    index = np.array([i for i, t in enumerate(vocab.terms) if t in table.word_vectors], dtype=np.int64)
    unit = _unit_rows((table.word_vectors[vocab.terms[i]] for i in index), table.dim)
    return index, unit


def build_similarity_matrix(
    table: EmbeddingTable,
    vocab: Vocabulary,
    alpha_word: float,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
) -> SimilarityMatrix:
    """
    Build C with C[t, t'] = cos(v_t, v_t') where that exceeds alpha_word.

    Blocks of normalized rows are multiplied against the remaining rows of the
    upper triangle only, then mirrored, so C is exactly symmetric. Every term,
    embedded or not, gets C[t, t] = 1.

    Args:
        table: Embeddings
        vocab: Vocabulary fixing the row/column order
        alpha_word: Strict cutoff in [0, 1)
        block_size: Rows per matrix-multiplication block
        workers: Threads computing blocks concurrently

    Returns:
        The sparse similarity matrix
    """
    if not 0.0 <= alpha_word < 1.0:
        raise NumericalError(f"alpha_word must lie in [0, 1), got {alpha_word}")
    index, unit = _embedded_terms(table, vocab)
    n_embedded = len(index)

    def upper_block(start: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        stop = min(start + block_size, n_embedded)
        sims = unit[start:stop] @ unit[start:].T
        rows, cols = np.nonzero(sims > alpha_word)
        strict = cols + start > rows + start
        rows, cols = rows[strict], cols[strict]
        return rows + start, cols + start, np.minimum(sims[rows, cols], 1.0)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = list(pool.map(upper_block, range(0, n_embedded, block_size)))
    rows = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, dtype=np.int64)
    cols = np.concatenate([p[1] for p in parts]) if parts else np.empty(0, dtype=np.int64)
    vals = np.concatenate([p[2] for p in parts]) if parts else np.empty(0)

    n_terms = len(vocab)
    upper = sp.coo_matrix((vals, (index[rows], index[cols])), shape=(n_terms, n_terms))
    matrix = (upper + upper.T + sp.identity(n_terms, format="coo")).tocsr()
    matrix.sort_indices()
    logger.info(
        "Similarity matrix: alpha_word=%.3f, %d off-diagonal pairs, %d of %d terms embedded",
        alpha_word,
        len(vals),
        n_embedded,
        n_terms,
    )
    return SimilarityMatrix(matrix=matrix, alpha_word=alpha_word)


def save_similarity(similarity: SimilarityMatrix, path: Union[str, Path]) -> None:
    sp.save_npz(path, similarity.matrix)


def load_similarity(path: Union[str, Path], alpha_word: float) -> SimilarityMatrix:
    return SimilarityMatrix(matrix=sp.load_npz(path).tocsr(), alpha_word=alpha_word)


def entity_related_index(
    table: EmbeddingTable,
    vocab: Vocabulary,
    entity_ids: Iterable[str],
    alpha_ent: float,
) -> dict[str, np.ndarray]:
    """
    Term indices of E^e = {t in V : cos(v_e, v_t) >= alpha_ent} for many entities.

    Unembedded entities map to an empty array and are reported once.

    Args:
        table: Embeddings
        vocab: Vocabulary
        entity_ids: Entities to resolve
        alpha_ent: Inclusive cutoff in [0, 1)

    Returns:
        Entity id to sorted term-index array
    """
    if not 0.0 <= alpha_ent < 1.0:
        raise NumericalError(f"alpha_ent must lie in [0, 1), got {alpha_ent}")
    entity_ids = sorted(set(entity_ids))
    embedded = [e for e in entity_ids if table.entity(e) is not None]
    missing = len(entity_ids) - len(embedded)
    if missing:
        logger.warning("%d of %d entities have no embedding and boost nothing", missing, len(entity_ids))
    related = {e: np.empty(0, dtype=np.int64) for e in entity_ids}
    if not embedded:
        return related
    index, unit = _embedded_terms(table, vocab)
    entity_unit = _unit_rows((table.entity(e) for e in embedded), table.dim)
    sims = entity_unit @ unit.T
    for row, entity_id in enumerate(embedded):
        related[entity_id] = np.sort(index[sims[row] >= alpha_ent])
    return related


def entity_related_words(
    table: EmbeddingTable,
    vocab: Vocabulary,
    entity_id: str,
    alpha_ent: float,
) -> frozenset[str]:
    """Vocabulary words at cosine >= alpha_ent from an entity; empty if it is unembedded."""
    related = entity_related_index(table, vocab, [entity_id], alpha_ent)[entity_id]
    return frozenset(vocab.terms[i] for i in related)
