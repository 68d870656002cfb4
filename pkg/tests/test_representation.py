"""TF-IDF, CluWords and NEiCE weights checked against a dense brute-force evaluator."""
import math

import numpy as np
import pytest
import scipy.sparse as sp

from podtopics.exceptions import ConfigError, NumericalError
from podtopics.models.run import RepresentationKind
from podtopics.services.corpus_ingest import ingest_corpus
from podtopics.services.representation import (
    build_representation,
    cluwords,
    compute_mu,
    dump_representation,
    idf_star,
    mean_similarity,
    neice,
    tf_idf,
    tf_star,
)
from podtopics.utils.matrix_io import read_triplets


def dense_tf_idf(A: np.ndarray) -> np.ndarray:
    n_docs = A.shape[0]
    doc_freq = (A > 0).sum(axis=0)
    return A * np.log(n_docs / doc_freq)


def dense_mu(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    n_docs, n_terms = A.shape
    mu = np.zeros((n_docs, n_terms))
    for d in range(n_docs):
        tokens = np.nonzero(A[d])[0]
        for t in range(n_terms):
            related = [C[t, u] for u in tokens if C[t, u] != 0]
            mu[d, t] = sum(related) / len(related) if related else 0.0
    return mu


def dense_idf_star(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.log(A.shape[0] / dense_mu(A, C).sum(axis=0))


def dense_cluwords(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    return (A @ C) * dense_idf_star(A, C)


def dense_neice(A: np.ndarray, C: np.ndarray, entities_per_doc, related_sets) -> np.ndarray:
    n_docs, n_terms = A.shape
    AC = A @ C
    tf_ne = AC.copy()
    for d in range(n_docs):
        tokens = np.nonzero(A[d])[0]
        for t in range(n_terms):
            boosted = any(t in related_sets.get(e, ()) for e in entities_per_doc[d])
            related = [u for u in tokens if C[t, u] != 0]
            if boosted and related:
                tf_ne[d, t] = AC[d, t] + max(AC[d, u] for u in related)
    return tf_ne * dense_idf_star(A, C)


def random_entities(rng, n_docs, n_terms):
    entity_ids = ["e0", "e1", "e2"]
    entities_per_doc = [
        tuple(e for e in entity_ids if rng.random() < 0.4) for _ in range(n_docs)
    ]
    # e2 plays the unembedded entity: it has no related set
    related = {
        e: np.sort(rng.choice(n_terms, size=int(rng.integers(0, n_terms + 1)), replace=False))
        for e in entity_ids[:2]
    }
    return entities_per_doc, related


class TestTfIdf:

    def test_hand_example(self):
        A = sp.csr_matrix(np.array([[2, 1], [0, 1]]))
        np.testing.assert_allclose(tf_idf(A).toarray(), [[2 * math.log(2), 0.0], [0.0, 0.0]])

    def test_zero_row(self):
        A = sp.csr_matrix(np.array([[1, 0], [0, 0], [0, 1]]))
        assert tf_idf(A)[1].nnz == 0

    def test_unused_term(self):
        with pytest.raises(NumericalError):
            tf_idf(sp.csr_matrix(np.array([[1, 0]])))


class TestMeanSimilarity:

    def test_diagonal_only(self):
        A = sp.csr_matrix(np.array([[1, 1]]))
        assert compute_mu(A, sp.identity(2, format="csr"), 0, 0) == 1.0

    def test_unrelated_term(self):
        A = sp.csr_matrix(np.array([[1, 0]]))
        assert compute_mu(A, sp.identity(2, format="csr"), 0, 1) == 0.0

    def test_hand_mean(self):
        # d = {a, b}; t relates to a with 0.8 and to b with 0.6
        C = sp.csr_matrix(np.array([
            [1.0, 0.0, 0.8],
            [0.0, 1.0, 0.6],
            [0.8, 0.6, 1.0],
        ]))
        A = sp.csr_matrix(np.array([[1, 1, 0], [0, 0, 1]]))
        assert compute_mu(A, C, 0, 2) == pytest.approx(0.7)
        accumulator = mean_similarity(A, C)
        assert accumulator.mu_at(0, 2) == pytest.approx(0.7)
        assert accumulator.count_at(0, 2) == 2

    def test_accumulator_invariants(self, random_bow, random_similarity):
        rng = np.random.default_rng(11)
        A = random_bow(rng, 8, 12)
        C = random_similarity(rng, 12)
        accumulator = mean_similarity(A, C)
        mu = accumulator.mu.toarray()
        counts = accumulator.counts.toarray()
        assert mu.min() >= 0.0
        assert mu.max() <= 1.0 + 1e-12
        np.testing.assert_array_equal(mu == 0, counts == 0)
        np.testing.assert_allclose(mu, dense_mu(A.toarray(), C.toarray()), atol=1e-12)


class TestCluWords:

    def test_identity_similarity_is_tf_idf(self, random_bow):
        rng = np.random.default_rng(0)
        A = random_bow(rng, 10, 15)
        C = sp.identity(15, format="csr")
        np.testing.assert_allclose(cluwords(A, C).toarray(), tf_idf(A).toarray(), rtol=1e-9, atol=0)

    def test_tf_star_is_dense_product(self, random_bow, random_similarity):
        rng = np.random.default_rng(1)
        A = random_bow(rng, 30, 50)
        C = random_similarity(rng, 50, cutoff=0.8)
        np.testing.assert_allclose(tf_star(A, C).toarray(), A.toarray() @ C.toarray(), atol=1e-12)

    def test_three_by_four_oracle(self):
        A = np.array([[1, 0, 2, 0], [0, 1, 0, 1], [1, 1, 0, 0]])
        C = np.array([
            [1.0, 0.7, 0.0, 0.0],
            [0.7, 1.0, 0.0, 0.5],
            [0.0, 0.0, 1.0, 0.9],
            [0.0, 0.5, 0.9, 1.0],
        ])
        result = cluwords(sp.csr_matrix(A), sp.csr_matrix(C)).toarray()
        np.testing.assert_allclose(result, dense_cluwords(A, C), atol=1e-12)

    def test_saturated_term_has_zero_column(self):
        # t0 relates only to itself and occurs everywhere: mu(t0, d) = 1 for all d
        A = sp.csr_matrix(np.array([[1, 1], [1, 0]]))
        C = sp.identity(2, format="csr")
        assert np.all(cluwords(A, C).toarray()[:, 0] == 0.0)

    def test_duplicating_documents_keeps_idf(self, random_bow, random_similarity):
        rng = np.random.default_rng(5)
        A = random_bow(rng, 6, 9)
        C = random_similarity(rng, 9)
        doubled = sp.vstack([A, A]).tocsr()
        np.testing.assert_allclose(
            idf_star(mean_similarity(doubled, C), 12),
            idf_star(mean_similarity(A, C), 6),
            atol=1e-12,
        )

    def test_shape_mismatch(self):
        with pytest.raises(NumericalError):
            cluwords(sp.csr_matrix(np.ones((2, 3))), sp.identity(2, format="csr"))


class TestNeice:

    def test_no_entities_is_cluwords(self, random_bow, random_similarity):
        rng = np.random.default_rng(2)
        A = random_bow(rng, 8, 10)
        C = random_similarity(rng, 10)
        related = {"e0": np.arange(10)}
        result = neice(A, C, [()] * 8, related)
        np.testing.assert_array_equal(result.toarray(), cluwords(A, C).toarray())

    def test_max_at_the_term_itself_doubles(self):
        A = sp.csr_matrix(np.array([[1, 0], [0, 1]]))
        C = sp.identity(2, format="csr")
        boosted = neice(A, C, [("e",), ()], {"e": np.array([0])}).toarray()
        plain = cluwords(A, C).toarray()
        assert boosted[0, 0] == pytest.approx(2 * plain[0, 0])
        assert boosted[0, 0] == pytest.approx(2 * math.log(2))
        np.testing.assert_array_equal(boosted[1], plain[1])

    def test_boost_reaches_terms_absent_from_document(self):
        # d0 holds only a; b relates to a and to the entity
        A = sp.csr_matrix(np.array([[2, 0, 0], [0, 1, 1]]))
        C = sp.csr_matrix(np.array([
            [1.0, 0.6, 0.0],
            [0.6, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]))
        result = neice(A, C, [("e",), ()], {"e": np.array([1])}).toarray()
        expected = dense_neice(A.toarray(), C.toarray(), [("e",), ()], {"e": {1}})
        np.testing.assert_allclose(result, expected, atol=1e-12)
        assert result[0, 1] > cluwords(A, C).toarray()[0, 1]

    def test_two_document_oracle(self):
        A = np.array([[1, 1, 0, 0], [0, 1, 1, 1]])
        C = np.array([
            [1.0, 0.6, 0.0, 0.45],
            [0.6, 1.0, 0.7, 0.0],
            [0.0, 0.7, 1.0, 0.0],
            [0.45, 0.0, 0.0, 1.0],
        ])
        entities = [("Star_Trek",), ()]
        related = {"Star_Trek": np.array([0, 2, 3])}
        result = neice(sp.csr_matrix(A), sp.csr_matrix(C), entities, related).toarray()
        expected = dense_neice(A, C, entities, {"Star_Trek": {0, 2, 3}})
        np.testing.assert_allclose(result, expected, atol=1e-12)

    def test_randomized_oracle(self, random_bow, random_similarity):
        rng = np.random.default_rng(2024)
        for trial in range(100):
            n_docs = int(rng.integers(2, 11))
            n_terms = int(rng.integers(2, 21))
            A = random_bow(rng, n_docs, n_terms, density=float(rng.uniform(0.1, 0.6)))
            C = random_similarity(rng, n_terms, cutoff=float(rng.uniform(0.3, 0.9)))
            entities_per_doc, related = random_entities(rng, n_docs, n_terms)
            A_dense, C_dense = A.toarray().astype(float), C.toarray()
            related_sets = {e: set(idx.tolist()) for e, idx in related.items()}

            np.testing.assert_allclose(
                mean_similarity(A, C).mu.toarray(), dense_mu(A_dense, C_dense), atol=1e-9,
                err_msg=f"mu, trial {trial}",
            )
            star = cluwords(A, C)
            np.testing.assert_allclose(
                star.toarray(), dense_cluwords(A_dense, C_dense), atol=1e-9,
                err_msg=f"cluwords, trial {trial}",
            )
            boosted = neice(A, C, entities_per_doc, related, workers=2)
            np.testing.assert_allclose(
                boosted.toarray(), dense_neice(A_dense, C_dense, entities_per_doc, related_sets), atol=1e-9,
                err_msg=f"neice, trial {trial}",
            )

    def test_dominance_and_locality(self, random_bow, random_similarity):
        rng = np.random.default_rng(9)
        for _ in range(20):
            A = random_bow(rng, 10, 20)
            C = random_similarity(rng, 20, cutoff=0.6)
            entities_per_doc, related = random_entities(rng, 10, 20)
            star = cluwords(A, C).toarray()
            boosted = neice(A, C, entities_per_doc, related).toarray()
            assert star.min() >= 0.0
            assert np.all(boosted >= star)
            without = [d for d in range(10) if not entities_per_doc[d]]
            np.testing.assert_array_equal(boosted[without], star[without])

    def test_entity_list_length(self):
        with pytest.raises(NumericalError):
            neice(sp.identity(2, format="csr"), sp.identity(2, format="csr"), [()], {})


class TestBuildRepresentation:

    def test_similarity_required(self, star_trek_documents, preprocess):
        corpus = ingest_corpus(star_trek_documents, [], preprocess)
        with pytest.raises(ConfigError):
            build_representation(RepresentationKind.CLUWORDS, corpus)

    def test_tfidf_with_row_normalization(self, star_trek_documents, preprocess):
        corpus = ingest_corpus(star_trek_documents, [], preprocess)
        rep = build_representation(RepresentationKind.TFIDF, corpus, normalize_rows=True)
        assert rep.kind is RepresentationKind.TFIDF
        assert rep.terms == corpus.vocabulary.terms
        assert rep.params == {"normalize_rows": True}
        norms = np.sqrt(np.asarray(rep.matrix.multiply(rep.matrix).sum(axis=1)).ravel())
        np.testing.assert_allclose(norms[norms > 0], 1.0)

    def test_dump(self, tmp_path, star_trek_documents, preprocess):
        corpus = ingest_corpus(star_trek_documents, [], preprocess)
        rep = build_representation(RepresentationKind.TFIDF, corpus)
        written = dump_representation(rep, tmp_path / "dump")
        assert [p.name for p in written] == ["tfidf.triplets"]
        np.testing.assert_array_equal(read_triplets(written[0]).toarray(), rep.matrix.toarray())
