"""End-to-end runs, sweeps, run outputs, statistics and the stage cache."""
import json
from pathlib import Path

import pytest

from conftest import planted_config
from podtopics.database import get_db
from podtopics.exceptions import StageError
from podtopics.models.artifact import StageArtifact
from podtopics.models.run import RepresentationKind, RunStatus
from podtopics.schemas.corpus import RawDocument
from podtopics.schemas.pipeline import PipelineConfig
from podtopics.services import pipeline, registry
from podtopics.services.corpus_ingest import ingest_corpus, load_corpus, read_annotations
from podtopics.services.pipeline import (
    GridPoint,
    compute_stats,
    run_pipeline,
    sweep,
    sweep_points,
)
from podtopics.services.synth import topic_purity


def _truth_blocks(paths):
    return json.loads(paths["truth"].read_text(encoding="utf-8"))["blocks"]


class TestGridPoint:

    def test_collapse(self):
        assert GridPoint.collapse(RepresentationKind.TFIDF, 0.4, 0.3, 20) == GridPoint(
            RepresentationKind.TFIDF, None, None, 20
        )
        assert GridPoint.collapse(RepresentationKind.CLUWORDS, 0.4, 0.3, 20).alpha_ent is None

    def test_label(self):
        assert GridPoint(RepresentationKind.NEICE, 0.4, 0.3, 20).label == "neice-aw0.4-ae0.3-k20"
        assert GridPoint(RepresentationKind.TFIDF, None, None, 50).label == "tfidf-k50"

    def test_sweep_points_collapse_unused_axes(self, planted_paths, tmp_path):
        config = planted_config(planted_paths, tmp_path / "runs", representation="tfidf", k_values=[2, 3])
        assert len(sweep_points(config)) == 2
        config = planted_config(planted_paths, tmp_path / "runs", representation="neice", k_values=[2, 3])
        assert len(sweep_points(config)) == 4 * 2 * 2


class TestRunPipeline:

    def test_tfidf_recovers_planted_topics(self, planted_paths, tmp_path):
        record = run_pipeline(planted_config(planted_paths, tmp_path / "runs", representation="tfidf"))
        assert record.status is RunStatus.SUCCEEDED
        blocks = _truth_blocks(planted_paths)
        assert all(topic_purity(topic, blocks) >= 0.9 for topic in record.topics)
        assert len(record.coherence.topics) == 3

    def test_output_layout(self, planted_paths, tmp_path):
        output_root = tmp_path / "runs"
        record = run_pipeline(planted_config(planted_paths, output_root))
        run_dir = output_root / "neice-aw0.4-ae0.5-k3"
        assert record.output_dir == str(run_dir)
        for name in ("topics.txt", "topics.json", "coherence.json", "manifest.json", "record.json"):
            assert (run_dir / name).is_file()
        for name in ("W.bin", "H.bin", "manifest.json"):
            assert (run_dir / "model" / name).is_file()
        assert not list(output_root.glob(".*.partial"))
        lines = (run_dir / "topics.txt").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3
        assert all(len(line.split("\t")) == 10 for line in lines)

    def test_manifest_repeats_the_run(self, planted_paths, tmp_path):
        record = run_pipeline(planted_config(planted_paths, tmp_path / "runs", representation="cluwords"))
        manifest_path = tmp_path / "runs" / "cluwords-aw0.4-k3" / "manifest.json"
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        assert set(manifest) == {"run_key", "version", "config", "seeds", "inputs", "point"}
        assert set(manifest["inputs"]) == {"corpus_path", "annotations_path", "embeddings_path", "reference_path"}
        repeated = PipelineConfig.load(manifest_path, {"output_dir": str(tmp_path / "again")})
        again = run_pipeline(repeated)
        assert [t.terms for t in again.topics] == [t.terms for t in record.topics]
        assert again.coherence == record.coherence

    def test_byte_identical_outputs(self, planted_paths, tmp_path):
        first = run_pipeline(planted_config(planted_paths, tmp_path / "a"))
        second = run_pipeline(planted_config(planted_paths, tmp_path / "b"), use_cache=False)
        for name in ("topics.txt", "topics.json", "coherence.json"):
            assert (Path(first.output_dir) / name).read_bytes() == (Path(second.output_dir) / name).read_bytes()

    def test_neice_without_annotations_is_cluwords(self, planted_paths, tmp_path):
        neice = run_pipeline(planted_config(
            planted_paths, tmp_path / "n", representation="neice", annotations_path=None
        ))
        plain = run_pipeline(planted_config(
            planted_paths, tmp_path / "c", representation="cluwords", annotations_path=None
        ))
        assert [t.model_dump() for t in neice.topics] == [t.model_dump() for t in plain.topics]

    def test_failure_removes_outputs_and_is_recorded(self, planted_paths, tmp_path):
        output_root = tmp_path / "runs"
        config = planted_config(planted_paths, output_root, representation="tfidf", n_topics=500)
        with pytest.raises(StageError) as excinfo:
            run_pipeline(config)
        assert excinfo.value.stage == "factorize"
        assert excinfo.value.exit_code == 1
        assert list(output_root.iterdir()) == []
        with get_db() as db:
            runs = registry.list_runs(db)
            assert [run.status for run in runs] == [RunStatus.FAILED]
            assert "K=500" in runs[0].error

    def test_missing_input_names_stage(self, planted_paths, tmp_path):
        config = planted_config(planted_paths, tmp_path / "runs", embeddings_path=tmp_path / "missing.txt")
        with pytest.raises(StageError) as excinfo:
            run_pipeline(config)
        assert excinfo.value.stage == "hash"
        assert excinfo.value.exit_code == 2

    def test_records_success(self, planted_paths, tmp_path):
        record = run_pipeline(planted_config(planted_paths, tmp_path / "runs", representation="tfidf"))
        with get_db() as db:
            run = registry.list_runs(db, limit=1)[0]
            assert run.run_key == record.run_key
            assert run.mean_cv == pytest.approx(record.coherence.mean_cv)
            assert run.representation is RepresentationKind.TFIDF


class TestStageCache:

    def test_artifacts_registered_and_reused(self, planted_paths, tmp_path):
        config = planted_config(planted_paths, tmp_path / "runs")
        first = run_pipeline(config)
        with get_db() as db:
            stages = sorted(a.stage for a in db.query(StageArtifact).all())
        assert stages == ["cooccurrence", "similarity"]
        second = run_pipeline(config)
        assert second.coherence == first.coherence

    def test_vanished_artifact_recomputed(self, planted_paths, tmp_path):
        config = planted_config(planted_paths, tmp_path / "runs", representation="cluwords")
        first = run_pipeline(config)
        for path in (tmp_path / "cache").iterdir():
            path.unlink()
        second = run_pipeline(config)
        assert [t.terms for t in second.topics] == [t.terms for t in first.topics]
        assert len(list((tmp_path / "cache").iterdir())) == 2


class TestSweep:

    def test_grid_and_table(self, planted_paths, tmp_path):
        output_root = tmp_path / "sweep"
        config = planted_config(
            planted_paths, output_root,
            representation="cluwords", alpha_word_grid=[0.3, 0.5], alpha_ent_grid=[0.3, 0.4],
            k_values=[2, 3], workers=2,
        )
        result = sweep(config, name="grid")
        assert len(result.records) == 4
        assert all(r.status is RunStatus.SUCCEEDED for r in result.records)
        assert result.table_rows() == [(0.3, None), (0.5, None)]
        assert result.table_columns() == [2, 3]
        table = (output_root / "sweep.tsv").read_text(encoding="utf-8").splitlines()
        assert table[0] == "alpha_word\talpha_ent\tK=2\tK=3"
        assert len(table) == 3
        summary = json.loads((output_root / "sweep.json").read_text(encoding="utf-8"))
        best = max(result.cells, key=lambda c: c.mean_cv)
        assert summary["best"]["run_key"] == best.run_key == result.best_run_key
        assert summary["failed"] == []
        with get_db() as db:
            runs = registry.list_runs(db, sweep_id=1)
            assert len(runs) == 4

    def test_matches_independent_runs(self, planted_paths, tmp_path):
        config = planted_config(
            planted_paths, tmp_path / "sweep",
            representation="neice", alpha_word_grid=[0.4], alpha_ent_grid=[0.3, 0.5], k_values=[3],
        )
        result = sweep(config)
        single = run_pipeline(planted_config(
            planted_paths, tmp_path / "single", representation="neice", alpha_ent=0.3, n_topics=3
        ))
        swept = next(r for r in result.records if r.alpha_ent == 0.3)
        assert [t.model_dump() for t in swept.topics] == [t.model_dump() for t in single.topics]
        assert swept.coherence == single.coherence

    def test_failed_point_recorded_and_sweep_continues(self, planted_paths, tmp_path):
        output_root = tmp_path / "sweep"
        config = planted_config(planted_paths, output_root, representation="tfidf", k_values=[3, 500])
        result = sweep(config)
        statuses = [r.status for r in result.records]
        assert statuses == [RunStatus.SUCCEEDED, RunStatus.FAILED]
        assert result.cells[1].mean_cv is None
        assert result.best_run_key == result.records[0].run_key
        summary = json.loads((output_root / "sweep.json").read_text(encoding="utf-8"))
        assert summary["failed"] == [result.records[1].run_key]
        table = (output_root / "sweep.tsv").read_text(encoding="utf-8").splitlines()
        assert table[0] == "alpha_word\talpha_ent\tK=3\tK=500"
        assert table[1].split("\t")[-1] == "-"

    def test_unexpected_error_fails_only_its_point(self, planted_paths, tmp_path, monkeypatch):
        original = pipeline.nmf

        def flaky_nmf(matrix, n_topics, options):
            if n_topics == 2:
                raise ValueError("array must not contain infs or NaNs")
            return original(matrix, n_topics, options)

        monkeypatch.setattr(pipeline, "nmf", flaky_nmf)
        config = planted_config(planted_paths, tmp_path / "sweep", representation="tfidf", k_values=[2, 3])
        result = sweep(config)
        assert [r.status for r in result.records] == [RunStatus.FAILED, RunStatus.SUCCEEDED]
        assert "ValueError" in result.records[0].error
        assert "factorize" in result.records[0].error
        assert result.best_run_key == result.records[1].run_key
        assert not (tmp_path / "sweep" / "tfidf-k2").exists()

    def test_single_point_equals_run(self, planted_paths, tmp_path):
        config = planted_config(
            planted_paths, tmp_path / "sweep", representation="tfidf", k_values=[3]
        )
        swept = sweep(config).records[0]
        single = run_pipeline(planted_config(planted_paths, tmp_path / "single", representation="tfidf"))
        assert swept.topics == single.topics
        assert swept.coherence == single.coherence


class TestStats:

    def test_hand_tally(self, star_trek_documents, star_trek_annotations, preprocess):
        stats = compute_stats(ingest_corpus(star_trek_documents, star_trek_annotations, preprocess))
        assert stats.n_documents == 3
        assert stats.n_entity_mentions == 1
        assert stats.n_documents_with_entities == 1
        assert stats.mean_words_title == pytest.approx(7 / 3)
        assert stats.mean_words_description == pytest.approx(5.0)

    def test_stopwords_count_as_words(self, preprocess):
        docs = [
            RawDocument(id="a", title="yoga for calm minds", description="breathing"),
            RawDocument(id="b", title="yoga calm minds", description="breathing"),
        ]
        stats = compute_stats(ingest_corpus(docs, [], preprocess))
        assert stats.mean_words_title == pytest.approx((4 + 3) / 2)
        assert stats.n_entity_mentions == 0
        assert stats.n_documents_with_entities == 0

    def test_planted_counts(self, planted_paths, preprocess):
        documents = load_corpus(planted_paths["corpus"])
        annotations = read_annotations(planted_paths["annotations"])
        stats = compute_stats(ingest_corpus(documents, annotations, preprocess))
        assert stats.n_documents == 120
        assert stats.vocabulary_size == 60
        assert stats.n_entity_mentions == len(annotations) == 120
        assert stats.n_documents_with_entities == 120
        # Titles carry the two-word mention plus three block terms
        assert stats.mean_words_title == pytest.approx(5.0)
        assert stats.mean_words_description == pytest.approx(9.0)
