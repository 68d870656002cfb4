"""Embedding loading, cosine queries, the similarity matrix and entity-related words."""
import numpy as np
import pytest

from podtopics.exceptions import DataError, NumericalError
from podtopics.services.corpus_ingest import Vocabulary
from podtopics.services.embedding_store import (
    EmbeddingTable,
    build_similarity_matrix,
    cosine,
    entity_key,
    entity_related_index,
    entity_related_words,
    load_embeddings,
    load_similarity,
    save_similarity,
)


def _write(path, rows, dim, count=None):
    lines = [f"{count if count is not None else len(rows)} {dim}"]
    lines += [token + " " + " ".join(str(v) for v in vector) for token, vector in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def vocab() -> Vocabulary:
    return Vocabulary(("captain", "starship", "yoga"))


class TestLoadEmbeddings:

    def test_filters_to_vocabulary_and_entities(self, tmp_path, vocab):
        path = _write(tmp_path / "emb.txt", [
            ("captain", [1.0, 0.0]),
            ("starship", [0.9, 0.1]),
            ("unused", [0.0, 1.0]),
            ("ENTITY/Star_Trek", [1.0, 0.1]),
            ("ENTITY/Other", [0.0, 1.0]),
        ], dim=2)
        table = load_embeddings(path, vocab, {"Star_Trek"})
        assert set(table.word_vectors) == {"captain", "starship"}
        assert set(table.entity_vectors) == {"Star_Trek"}
        assert table.word("yoga") is None
        assert table.coverage["words"] == pytest.approx(2 / 3)
        assert table.coverage["entities"] == 1.0

    def test_entity_token_with_spaces(self, tmp_path, vocab):
        path = _write(tmp_path / "emb.txt", [
            ("captain", [1.0, 0.0]),
            ("ENTITY/Star Trek", [1.0, 0.1]),
        ], dim=2)
        table = load_embeddings(path, vocab, {"Star_Trek"})
        np.testing.assert_allclose(table.entity("Star Trek"), [1.0, 0.1])

    def test_entity_token_ending_in_number(self, tmp_path, vocab):
        path = _write(tmp_path / "emb.txt", [
            ("yoga", [0.1, 0.2]),
            ("ENTITY/Apollo 11", [0.3, 0.4]),
            ("ENTITY/Windows 10 Mobile 2", [0.5, 0.6]),
        ], dim=2)
        table = load_embeddings(path, vocab, {"Apollo_11", "Windows_10_Mobile_2"})
        np.testing.assert_allclose(table.entity("Apollo_11"), [0.3, 0.4])
        np.testing.assert_allclose(table.entity("Windows 10 Mobile 2"), [0.5, 0.6])
        np.testing.assert_allclose(table.word("yoga"), [0.1, 0.2])

    def test_word_row_with_extra_number_rejected(self, tmp_path, vocab):
        path = tmp_path / "emb.txt"
        path.write_text("1 2\nyoga 11 0.3 0.4\n", encoding="utf-8")
        with pytest.raises(DataError) as exc:
            load_embeddings(path, vocab, set())
        assert exc.value.line_number == 2

    def test_unprefixed_entities(self, tmp_path, vocab):
        path = _write(tmp_path / "emb.txt", [("captain", [1.0, 0.0]), ("Star_Trek", [0.5, 0.5])], dim=2)
        table = load_embeddings(path, vocab, {"Star_Trek"}, entity_prefix=None)
        assert table.entity("Star_Trek") is not None

    def test_dimension_mismatch(self, tmp_path, vocab):
        path = _write(tmp_path / "emb.txt", [("captain", [1.0, 0.0]), ("yoga", [1.0])], dim=2)
        with pytest.raises(DataError) as excinfo:
            load_embeddings(path, vocab, set())
        assert excinfo.value.line_number == 3

    def test_bad_header(self, tmp_path, vocab):
        path = tmp_path / "emb.txt"
        path.write_text("captain 1.0 0.0\n", encoding="utf-8")
        with pytest.raises(DataError) as excinfo:
            load_embeddings(path, vocab, set())
        assert excinfo.value.line_number == 1

    def test_non_finite_row(self, tmp_path, vocab):
        path = _write(tmp_path / "emb.txt", [("captain", ["nan", "0.0"])], dim=2)
        with pytest.raises(DataError, match="non-finite"):
            load_embeddings(path, vocab, set())

    def test_zero_norm_skipped(self, tmp_path, vocab):
        path = _write(tmp_path / "emb.txt", [("captain", [1.0, 0.0]), ("yoga", [0.0, 0.0])], dim=2)
        table = load_embeddings(path, vocab, set())
        assert table.word("yoga") is None

    def test_no_coverage(self, tmp_path, vocab):
        path = _write(tmp_path / "emb.txt", [("unrelated", [1.0, 0.0])], dim=2)
        with pytest.raises(DataError, match="no vocabulary term"):
            load_embeddings(path, vocab, set())


class TestCosine:

    def test_values(self):
        assert cosine([1, 0], [1, 0]) == pytest.approx(1.0)
        assert cosine([1, 0], [0, 2]) == pytest.approx(0.0)
        assert cosine([1, 1], [-1, -1]) == pytest.approx(-1.0)

    def test_zero_norm(self):
        with pytest.raises(NumericalError):
            cosine([0, 0], [1, 0])

    def test_shape_mismatch(self):
        with pytest.raises(NumericalError):
            cosine([1, 0], [1, 0, 0])

    def test_from_vectors_rejects_ragged(self):
        with pytest.raises(DataError):
            EmbeddingTable.from_vectors({"a": [1.0, 0.0], "b": [1.0]})


class TestSimilarityMatrix:

    def test_threshold_and_symmetry(self):
        rng = np.random.default_rng(7)
        terms = tuple(f"t{chr(97 + i)}" for i in range(15))
        vectors = {t: rng.standard_normal(5) for t in terms}
        table = EmbeddingTable.from_vectors(vectors)
        vocab = Vocabulary(terms)
        similarity = build_similarity_matrix(table, vocab, alpha_word=0.3, block_size=4, workers=2)
        dense = similarity.matrix.toarray()
        np.testing.assert_array_equal(dense, dense.T)
        np.testing.assert_array_equal(np.diag(dense), np.ones(len(terms)))
        for i, a in enumerate(terms):
            for j, b in enumerate(terms):
                if i == j:
                    continue
                expected = cosine(vectors[a], vectors[b])
                if expected > 0.3:
                    assert dense[i, j] == pytest.approx(expected, abs=1e-12)
                else:
                    assert dense[i, j] == 0.0

    def test_unembedded_terms_diagonal_only(self):
        table = EmbeddingTable.from_vectors({"aa": [1.0, 0.0], "bb": [1.0, 0.1]})
        vocab = Vocabulary(("aa", "bb", "cc"))
        dense = build_similarity_matrix(table, vocab, alpha_word=0.5).matrix.toarray()
        assert dense[2, 2] == 1.0
        assert dense[2, :2].sum() == 0.0
        assert dense[0, 1] > 0.99

    def test_invalid_alpha(self):
        table = EmbeddingTable.from_vectors({"aa": [1.0, 0.0]})
        with pytest.raises(NumericalError):
            build_similarity_matrix(table, Vocabulary(("aa",)), alpha_word=1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_support_shrinks_as_alpha_grows(self, seed):
        rng = np.random.default_rng(seed)
        terms = tuple(f"w{i:02d}" for i in range(25))
        table = EmbeddingTable.from_vectors({t: rng.standard_normal(4) for t in terms})
        vocab = Vocabulary(terms)
        alphas = sorted(rng.uniform(0.0, 0.95, size=4))
        supports = []
        for alpha in alphas:
            coo = build_similarity_matrix(table, vocab, alpha_word=alpha).matrix.tocoo()
            supports.append(set(zip(coo.row.tolist(), coo.col.tolist())))
        for looser, stricter in zip(supports, supports[1:]):
            assert stricter <= looser

    def test_save_load(self, tmp_path):
        table = EmbeddingTable.from_vectors({"aa": [1.0, 0.0], "bb": [1.0, 0.2]})
        similarity = build_similarity_matrix(table, Vocabulary(("aa", "bb")), alpha_word=0.2)
        save_similarity(similarity, tmp_path / "c.npz")
        loaded = load_similarity(tmp_path / "c.npz", 0.2)
        np.testing.assert_array_equal(loaded.matrix.toarray(), similarity.matrix.toarray())


class TestEntityRelatedWords:

    def test_inclusive_cutoff(self):
        table = EmbeddingTable.from_vectors(
            {"captain": [1.0, 0.0], "starship": [3.0, 4.0], "yoga": [0.0, 1.0]},
            {"Star_Trek": [1.0, 0.0]},
        )
        vocab = Vocabulary(("captain", "starship", "yoga"))
        assert entity_related_words(table, vocab, "Star_Trek", 0.6) == {"captain", "starship"}
        assert entity_related_words(table, vocab, "Star_Trek", 0.61) == {"captain"}

    @pytest.mark.parametrize("seed", range(5))
    def test_related_set_shrinks_as_alpha_grows(self, seed):
        rng = np.random.default_rng(seed)
        terms = tuple(f"w{i:02d}" for i in range(30))
        table = EmbeddingTable.from_vectors(
            {t: rng.standard_normal(4) for t in terms},
            {"Ent": rng.standard_normal(4)},
        )
        vocab = Vocabulary(terms)
        alphas = sorted(rng.uniform(0.0, 0.95, size=4))
        related = [entity_related_words(table, vocab, "Ent", alpha) for alpha in alphas]
        for looser, stricter in zip(related, related[1:]):
            assert stricter <= looser

    def test_unembedded_entity(self):
        table = EmbeddingTable.from_vectors({"captain": [1.0, 0.0]})
        related = entity_related_index(table, Vocabulary(("captain",)), ["Ghost"], 0.3)
        assert related["Ghost"].size == 0

    def test_entity_key(self):
        assert entity_key(" Star Trek ") == "Star_Trek"
