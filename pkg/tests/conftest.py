"""Shared fixtures: an isolated registry per test and small corpora."""
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from podtopics.config import get_settings
from podtopics.database import get_engine, get_session_factory
from podtopics.schemas.corpus import AnnotationField, EntityAnnotation, RawDocument
from podtopics.schemas.pipeline import PipelineConfig, PreprocessConfig
from podtopics.schemas.synth import SynthOptions
from podtopics.services import synth


def _clear_caches():
    get_session_factory.cache_clear()
    get_engine.cache_clear()
    get_settings.cache_clear()


@pytest.fixture(autouse=True)
def isolated_registry(tmp_path, monkeypatch):
    """Point the registry and stage cache at the test's temporary directory."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("DATABASE_URL", f"sqlite:///{tmp_path / 'registry.db'}")
    monkeypatch.setenv("CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("WORKERS", "1")
    _clear_caches()
    yield
    _clear_caches()


@pytest.fixture
def preprocess() -> PreprocessConfig:
    return PreprocessConfig(
        stopwords=frozenset(ENGLISH_STOP_WORDS),
        names=frozenset({"chris"}),
        min_term_freq=1,
        min_confidence=0.9,
        min_doc_tokens=0,
    )


@pytest.fixture
def star_trek_documents() -> list[RawDocument]:
    return [
        RawDocument(id="d1", title="Star Trek talk", description="Captain episodes and starship reviews"),
        RawDocument(id="d2", title="Morning yoga", description="Yoga breathing and yoga stretches"),
        RawDocument(id="d3", title="Starship news", description="Captain interviews about the starship"),
    ]


@pytest.fixture
def star_trek_annotations() -> list[EntityAnnotation]:
    return [
        EntityAnnotation(
            doc_id="d1", field=AnnotationField.TITLE, start=0, end=9, entity_id="Star_Trek", confidence=0.95
        ),
        EntityAnnotation(
            doc_id="d2", field=AnnotationField.TITLE, start=8, end=12, entity_id="Yoga", confidence=0.9
        ),
    ]


@pytest.fixture
def random_bow():
    """Factory for random count matrices whose every column is nonzero."""

    def make(rng: np.random.Generator, n_docs: int, n_terms: int, density: float = 0.3) -> sp.csr_matrix:
        dense = (rng.random((n_docs, n_terms)) < density) * rng.integers(1, 4, size=(n_docs, n_terms))
        for t in np.nonzero(dense.sum(axis=0) == 0)[0]:
            dense[rng.integers(0, n_docs), t] = 1
        return sp.csr_matrix(dense.astype(np.int64))

    return make


@pytest.fixture
def random_similarity():
    """Factory for symmetric similarity matrices with unit diagonal and cutoff-sparse off-diagonal."""

    def make(rng: np.random.Generator, n_terms: int, cutoff: float = 0.5) -> sp.csr_matrix:
        values = rng.random((n_terms, n_terms))
        values = np.triu(np.where(values > cutoff, values, 0.0), k=1)
        dense = values + values.T + np.eye(n_terms)
        return sp.csr_matrix(dense)

    return make


def write_planted(directory: Path, **options) -> dict[str, Path]:
    """Generate and write a planted corpus; returns the file paths by role."""
    return synth.write_synthetic(synth.generate(SynthOptions(**options)), directory)


def planted_config(paths: dict[str, Path], output_dir: Path, **overrides) -> PipelineConfig:
    values = {
        "corpus_path": paths["corpus"],
        "annotations_path": paths["annotations"],
        "embeddings_path": paths["embeddings"],
        "reference_path": paths["reference"],
        "output_dir": output_dir,
        "min_term_freq": 1,
        "n_topics": 3,
        "k_values": [3],
        "n_top_words": 10,
        "alpha_word": 0.4,
        "alpha_ent": 0.5,
    }
    values.update(overrides)
    return PipelineConfig(**values)


@pytest.fixture
def planted_paths(tmp_path) -> dict[str, Path]:
    return write_planted(tmp_path / "planted", n_docs=120, n_blocks=3, terms_per_block=20, seed=3)
