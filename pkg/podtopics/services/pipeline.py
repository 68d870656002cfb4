"""End-to-end orchestration: shared stages, grid points, sweeps and run outputs."""
import json
import logging
import shutil
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from podtopics import __version__
from podtopics.config import get_settings
from podtopics.database import get_db, init_db
from podtopics.exceptions import DataError, NumericalError, PodtopicsError, StageError
from podtopics.models.run import RepresentationKind, RunStatus
from podtopics.schemas.pipeline import PATH_FIELDS, PipelineConfig, PreprocessConfig
from podtopics.schemas.report import CoherenceReport, DatasetStats, RunRecord, SweepCell, SweepResult, TopicSummary
from podtopics.services import registry
from podtopics.services.coherence import (
    CooccurrenceIndex,
    build_index,
    load_index,
    load_reference,
    report_json,
    save_index,
    score_model,
)
from podtopics.services.corpus_ingest import (
    Corpus,
    ingest_corpus,
    load_corpus,
    preprocess_config,
    read_annotations,
)
from podtopics.services.embedding_store import (
    EmbeddingTable,
    SimilarityMatrix,
    build_similarity_matrix,
    entity_related_index,
    load_embeddings,
    load_similarity,
    save_similarity,
)
from podtopics.services.factorization import TopicModel, nmf, save_model, top_words
from podtopics.services.representation import (
    WeightedDocTermMatrix,
    build_representation,
    dump_representation,
    mean_similarity,
)
from podtopics.utils.hashing import sha256_file, sha256_json, sha256_text
from podtopics.utils.matrix_io import write_triplets

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridPoint:
    """One (representation, alpha_word, alpha_ent, K) combination."""

    kind: RepresentationKind
    alpha_word: Optional[float]
    alpha_ent: Optional[float]
    n_topics: int

    @classmethod
    def collapse(cls, kind: RepresentationKind, alpha_word: float, alpha_ent: float, n_topics: int) -> "GridPoint":
        """Drop the alphas a representation does not use."""
        kind = RepresentationKind(kind)
        return cls(
            kind=kind,
            alpha_word=None if kind is RepresentationKind.TFIDF else alpha_word,
            alpha_ent=alpha_ent if kind is RepresentationKind.NEICE else None,
            n_topics=n_topics,
        )

    @property
    def label(self) -> str:
        parts = [self.kind.value]
        if self.alpha_word is not None:
            parts.append(f"aw{self.alpha_word:g}")
        if self.alpha_ent is not None:
            parts.append(f"ae{self.alpha_ent:g}")
        parts.append(f"k{self.n_topics}")
        return "-".join(parts)


@dataclass
class Workspace:
    """Stage outputs shared by every grid point of a run or sweep."""

    config: PipelineConfig
    preprocess: PreprocessConfig
    corpus: Corpus
    stats: DatasetStats
    index: Optional[CooccurrenceIndex]
    input_hashes: dict[str, str]
    embeddings: Optional[EmbeddingTable] = None
    use_cache: bool = True
    timings: dict[str, float] = field(default_factory=dict)
    similarities: dict[float, SimilarityMatrix] = field(default_factory=dict)
    related: dict[float, dict[str, np.ndarray]] = field(default_factory=dict)
    representations: dict[GridPoint, WeightedDocTermMatrix] = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock)

    @property
    def vocabulary_hash(self) -> str:
        return sha256_text("\n".join(self.corpus.vocabulary.terms))


@contextmanager
def stage(name: str, timings: dict[str, float]) -> Iterator[None]:
    """Time a stage and attach its name to any error raised inside it; foreign exceptions count as numerical failures."""
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except PodtopicsError as exc:
        raise StageError(name, exc) from exc
    except OSError as exc:
        raise StageError(name, DataError(str(exc))) from exc
    except Exception as exc:
        raise StageError(name, NumericalError(f"unexpected {type(exc).__name__}: {exc}")) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def compute_stats(corpus: Corpus) -> DatasetStats:
    """
    Dataset summary: |D|, |V|, entity mentions, documents with entities and mean words per field.

    Word means count every alphabetic word of the raw fields, stopwords included.
    """
    return DatasetStats(
        n_documents=corpus.n_documents,
        vocabulary_size=len(corpus.vocabulary),
        n_entity_mentions=int(corpus.mention_counts.sum()),
        n_documents_with_entities=int(sum(1 for entities in corpus.entities if entities)),
        mean_words_title=float(corpus.title_words.mean()) if corpus.n_documents else 0.0,
        mean_words_description=float(corpus.description_words.mean()) if corpus.n_documents else 0.0,
    )


def input_hashes(config: PipelineConfig) -> dict[str, str]:
    """SHA-256 of every configured input file."""
    hashes = {}
    for key in PATH_FIELDS:
        path = getattr(config, key)
        if key != "output_dir" and path is not None:
            try:
                hashes[key] = sha256_file(path)
            except OSError as exc:
                raise DataError(f"cannot read input: {exc}", path=str(path)) from exc
    return hashes


def resolved_snapshot(config: PipelineConfig) -> dict:
    """Configuration snapshot with absolute paths, enough to repeat the run from anywhere."""
    updates = {key: Path(getattr(config, key)).resolve() for key in PATH_FIELDS if getattr(config, key) is not None}
    return config.model_copy(update=updates).snapshot()


def _cached(use_cache: bool, stage_name: str, key: str, load, compute, save):
    """Return a content-addressed stage output from the registry cache, computing it on a miss."""
    if not use_cache:
        return compute()
    with get_db() as db:
        path = registry.find_artifact(db, key)
    if path is not None:
        logger.info("Reusing cached %s from %s", stage_name, path)
        return load(path)
    value = compute()
    cache_dir = Path(get_settings().CACHE_DIR)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{stage_name}-{key[:24]}.npz"
    save(value, path)
    with get_db() as db:
        registry.register_artifact(db, stage_name, key, path)
    return value


def reference_index(
    config: PipelineConfig,
    preprocess: PreprocessConfig,
    terms: Sequence[str],
    hashes: dict[str, str],
    use_cache: bool = True,
) -> CooccurrenceIndex:
    """
    Co-occurrence index of the reference corpus restricted to `terms`.

    Without a reference path the modeling corpus itself is the reference.
    """
    reference_path = config.reference_path or config.corpus_path
    key = sha256_json({
        "stage": "cooccurrence",
        "reference": hashes.get("reference_path", hashes["corpus_path"]),
        "corpus_format": config.reference_path is None,
        "stopwords": sha256_text("\n".join(sorted(preprocess.stopwords))),
        "terms": sha256_text("\n".join(sorted(terms))),
        "window_size": config.window_size,
    })
    return _cached(
        use_cache,
        "cooccurrence",
        key,
        load_index,
        lambda: build_index(
            load_reference(
                reference_path,
                preprocess.stopwords,
                corpus_format=True if config.reference_path is None else None,
            ),
            config.window_size,
            restrict_to=frozenset(terms),
            workers=config.workers,
        ),
        save_index,
    )


def prepare_workspace(config: PipelineConfig, use_cache: bool = True, with_index: bool = True) -> Workspace:
    """
    Run the stages every grid point shares: ingestion, embeddings and the co-occurrence index.

    Args:
        config: Pipeline configuration
        use_cache: Reuse and store stage outputs in the registry cache
        with_index: Build the co-occurrence index (not needed before scoring)

    Returns:
        The workspace

    Raises:
        StageError: Naming the failing stage
    """
    if use_cache:
        init_db()
    timings: dict[str, float] = {}
    with stage("hash", timings):
        hashes = input_hashes(config)
    with stage("ingest", timings):
        preprocess = preprocess_config(config)
        documents = load_corpus(config.corpus_path)
        annotations = read_annotations(config.annotations_path) if config.annotations_path else []
        corpus = ingest_corpus(documents, annotations, preprocess)
        stats = compute_stats(corpus)

    embeddings = None
    if config.representation is not RepresentationKind.TFIDF:
        with stage("embeddings", timings):
            embeddings = load_embeddings(
                config.embeddings_path,
                corpus.vocabulary,
                corpus.entity_set,
                entity_prefix=config.entity_prefix,
            )

    index = None
    if with_index:
        with stage("reference", timings):
            index = reference_index(config, preprocess, corpus.vocabulary.terms, hashes, use_cache)

    return Workspace(
        config=config,
        preprocess=preprocess,
        corpus=corpus,
        stats=stats,
        index=index,
        input_hashes=hashes,
        embeddings=embeddings,
        use_cache=use_cache,
        timings=timings,
    )


def similarity_for(ws: Workspace, alpha_word: float) -> SimilarityMatrix:
    """C for one alpha_word, shared across every alpha_ent and K."""
    with ws.lock:
        if alpha_word not in ws.similarities:
            key = sha256_json({
                "stage": "similarity",
                "embeddings": ws.input_hashes["embeddings_path"],
                "entity_prefix": ws.config.entity_prefix,
                "terms": ws.vocabulary_hash,
                "alpha_word": alpha_word,
            })
            ws.similarities[alpha_word] = _cached(
                ws.use_cache,
                "similarity",
                key,
                lambda path: load_similarity(path, alpha_word),
                lambda: build_similarity_matrix(
                    ws.embeddings, ws.corpus.vocabulary, alpha_word, workers=ws.config.workers
                ),
                save_similarity,
            )
        return ws.similarities[alpha_word]


def related_for(ws: Workspace, alpha_ent: float) -> dict[str, np.ndarray]:
    """E^e for every accepted entity at one alpha_ent, shared across every alpha_word and K."""
    with ws.lock:
        if alpha_ent not in ws.related:
            ws.related[alpha_ent] = entity_related_index(
                ws.embeddings, ws.corpus.vocabulary, ws.corpus.entity_set, alpha_ent
            )
        return ws.related[alpha_ent]


def representation_for(ws: Workspace, point: GridPoint) -> WeightedDocTermMatrix:
    """Weighted matrix of a grid point; the K axis shares it."""
    key = GridPoint(point.kind, point.alpha_word, point.alpha_ent, 0)
    with ws.lock:
        if key not in ws.representations:
            similarity = related = None
            if point.kind is not RepresentationKind.TFIDF:
                similarity = similarity_for(ws, point.alpha_word)
            if point.kind is RepresentationKind.NEICE:
                related = related_for(ws, point.alpha_ent)
            ws.representations[key] = build_representation(
                point.kind,
                ws.corpus,
                similarity=similarity,
                entity_related=related,
                alpha_ent=point.alpha_ent,
                normalize_rows=ws.config.normalize_rows,
                workers=ws.config.workers,
            )
        return ws.representations[key]


def point_config(config: PipelineConfig, point: GridPoint) -> PipelineConfig:
    """The single-run configuration equivalent to a grid point."""
    updates = {"representation": point.kind, "n_topics": point.n_topics}
    if point.alpha_word is not None:
        updates["alpha_word"] = point.alpha_word
    if point.alpha_ent is not None:
        updates["alpha_ent"] = point.alpha_ent
    return config.model_copy(update=updates)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def topics_text(topics: list[TopicSummary]) -> str:
    """One topic per line, top words separated by tabs."""
    return "".join("\t".join(topic.terms) + "\n" for topic in topics)


def write_run_outputs(
    run_dir: Path,
    record: RunRecord,
    model: TopicModel,
    coherence: CoherenceReport,
    manifest: dict,
) -> None:
    """Write topics, coherence report, model dump, manifest and record into one directory."""
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "topics.txt").write_text(topics_text(record.topics), encoding="utf-8")
    _write_json(run_dir / "topics.json", [topic.model_dump(mode="json") for topic in record.topics])
    (run_dir / "coherence.json").write_text(report_json(coherence), encoding="utf-8")
    save_model(model, run_dir / "model")
    _write_json(run_dir / "manifest.json", manifest)
    _write_json(run_dir / "record.json", record.model_dump(mode="json"))


def execute_point(ws: Workspace, point: GridPoint, output_root: Path) -> RunRecord:
    """
    Factorize, summarize, score and write one grid point.

    Outputs are written to a scratch directory renamed into place on success
    and removed on failure.

    Raises:
        StageError: Naming the failing stage
    """
    config = point_config(ws.config, point)
    snapshot = resolved_snapshot(config)
    run_key = sha256_json({"config": snapshot, "inputs": ws.input_hashes})
    run_dir = output_root / point.label
    scratch = output_root / f".{point.label}.partial"
    timings = dict(ws.timings)
    start = time.perf_counter()
    try:
        with stage("representation", timings):
            representation = representation_for(ws, point)
        with stage("factorize", timings):
            model = nmf(representation, point.n_topics, config.nmf)
        with stage("top_words", timings):
            topics = top_words(model, config.n_top_words)
        with stage("coherence", timings):
            coherence = score_model(ws.index, topics)
        timings["total"] = sum(timings.values())
        record = RunRecord(
            run_key=run_key,
            status=RunStatus.SUCCEEDED,
            representation=point.kind,
            alpha_word=point.alpha_word,
            alpha_ent=point.alpha_ent,
            n_topics=point.n_topics,
            seed=config.nmf.seed,
            config=snapshot,
            topics=topics,
            coherence=coherence,
            stats=ws.stats,
            timings=timings,
            output_dir=str(run_dir),
        )
        manifest = {
            "run_key": run_key,
            "version": __version__,
            "config": snapshot,
            "seeds": {"nmf": config.nmf.seed},
            "inputs": ws.input_hashes,
            "point": {
                "representation": point.kind.value,
                "alpha_word": point.alpha_word,
                "alpha_ent": point.alpha_ent,
                "n_topics": point.n_topics,
            },
        }
        with stage("write", timings):
            shutil.rmtree(scratch, ignore_errors=True)
            write_run_outputs(scratch, record, model, coherence, manifest)
            if config.dump_matrices:
                accumulator = None
                if point.kind is not RepresentationKind.TFIDF:
                    accumulator = mean_similarity(ws.corpus.bow, similarity_for(ws, point.alpha_word).matrix)
                dump_representation(representation, scratch / "matrices", accumulator)
            if run_dir.exists():
                shutil.rmtree(run_dir)
            scratch.rename(run_dir)
    except Exception as exc:
        shutil.rmtree(scratch, ignore_errors=True)
        if isinstance(exc, StageError):
            raise
        raise StageError("run", NumericalError(f"unexpected {type(exc).__name__}: {exc}")) from exc
    logger.info(
        "Run %s finished in %.2fs: mean C_V %.4f",
        point.label,
        time.perf_counter() - start,
        record.coherence.mean_cv,
    )
    return record


def _failed_record(ws: Workspace, point: GridPoint, error: StageError) -> RunRecord:
    config = point_config(ws.config, point)
    snapshot = resolved_snapshot(config)
    return RunRecord(
        run_key=sha256_json({"config": snapshot, "inputs": ws.input_hashes}),
        status=RunStatus.FAILED,
        representation=point.kind,
        alpha_word=point.alpha_word,
        alpha_ent=point.alpha_ent,
        n_topics=point.n_topics,
        seed=config.nmf.seed,
        config=snapshot,
        stats=ws.stats,
        error=error.detail,
    )


def run_pipeline(config: PipelineConfig, use_cache: bool = True) -> RunRecord:
    """
    Execute one grid point end to end: ingest, embeddings, representation, NMF, top words, coherence.

    Args:
        config: Configuration; its alpha_word, alpha_ent and n_topics select the point
        use_cache: Use the registry cache and record the run

    Returns:
        The run record

    Raises:
        StageError: If any stage fails; partial outputs are removed
    """
    ws = prepare_workspace(config, use_cache=use_cache)
    point = GridPoint.collapse(config.representation, config.alpha_word, config.alpha_ent, config.n_topics)
    output_root = Path(config.output_dir)
    output_root.mkdir(parents=True, exist_ok=True)
    try:
        record = execute_point(ws, point, output_root)
    except StageError as exc:
        if use_cache:
            with get_db() as db:
                registry.record_run(db, _failed_record(ws, point, exc))
        raise
    if use_cache:
        with get_db() as db:
            registry.record_run(db, record, duration=record.timings.get("total"))
    return record


def sweep_points(config: PipelineConfig) -> list[GridPoint]:
    """Grid points in table order, alphas unused by the representation collapsed."""
    points: list[GridPoint] = []
    for alpha_word in config.alpha_word_grid:
        for alpha_ent in config.alpha_ent_grid:
            for n_topics in config.k_values:
                point = GridPoint.collapse(config.representation, alpha_word, alpha_ent, n_topics)
                if point not in points:
                    points.append(point)
    return points


def _percent(value: Optional[float]) -> str:
    return "-" if value is None else f"{100 * value:.1f}"


def sweep_table(result: SweepResult) -> str:
    """Mean C_V in percent: one row per alpha pair, one column per K."""
    columns = result.table_columns()
    lines = ["\t".join(["alpha_word", "alpha_ent", *(f"K={k}" for k in columns)])]
    cells = {(c.alpha_word, c.alpha_ent, c.n_topics): c.mean_cv for c in result.cells}
    for alpha_word, alpha_ent in result.table_rows():
        row = [
            "-" if alpha_word is None else f"{alpha_word:g}",
            "-" if alpha_ent is None else f"{alpha_ent:g}",
        ]
        row += [_percent(cells.get((alpha_word, alpha_ent, k))) for k in columns]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def sweep(config: PipelineConfig, use_cache: bool = True, name: Optional[str] = None) -> SweepResult:
    """
    Run every grid point, sharing stages, and emit the comparison table.

    Ingestion, embeddings and the co-occurrence index run once; C is built
    once per alpha_word and E^e once per alpha_ent. Points run concurrently up
    to `config.workers`. A failed point is recorded and the sweep continues.

    Args:
        config: Configuration with alpha grids and k_values
        use_cache: Use the registry cache and record the sweep
        name: Label stored in the registry

    Returns:
        Records, table cells and the best point by mean C_V

    Raises:
        StageError: If a shared stage fails
    """
    ws = prepare_workspace(config, use_cache=use_cache)
    points = sweep_points(config)
    output_root = Path(config.output_dir)
    output_root.mkdir(parents=True, exist_ok=True)

    def run_point(point: GridPoint) -> RunRecord:
        try:
            return execute_point(ws, point, output_root)
        except StageError as exc:
            logger.error("Grid point %s failed: %s", point.label, exc.detail)
            return _failed_record(ws, point, exc)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        records = list(pool.map(run_point, points))

    cells = [
        SweepCell(
            alpha_word=r.alpha_word,
            alpha_ent=r.alpha_ent,
            n_topics=r.n_topics,
            mean_cv=r.coherence.mean_cv if r.coherence else None,
            run_key=r.run_key,
        )
        for r in records
    ]
    scored = [c for c in cells if c.mean_cv is not None]
    best = max(scored, key=lambda c: c.mean_cv) if scored else None
    result = SweepResult(records=records, cells=cells, best_run_key=best.run_key if best else None)

    (output_root / "sweep.tsv").write_text(sweep_table(result), encoding="utf-8")
    _write_json(output_root / "sweep.json", {
        "cells": [c.model_dump(mode="json") for c in cells],
        "best": best.model_dump(mode="json") if best else None,
        "failed": [r.run_key for r in records if r.status is RunStatus.FAILED],
    })
    if best:
        logger.info(
            "Best point: alpha_word=%s alpha_ent=%s K=%d, mean C_V %.4f",
            best.alpha_word,
            best.alpha_ent,
            best.n_topics,
            best.mean_cv,
        )
    if use_cache:
        with get_db() as db:
            registry.record_sweep(db, name or output_root.name, records, result.best_run_key)
    return result


def write_ingest_outputs(corpus: Corpus, directory: Path) -> None:
    """Write vocabulary.txt, entities.jsonl and the BoW matrix as triplets."""
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "vocabulary.txt").write_text("".join(f"{t}\n" for t in corpus.vocabulary.terms), encoding="utf-8")
    with open(directory / "entities.jsonl", "w", encoding="utf-8") as fh:
        for doc_id, entities in zip(corpus.doc_ids, corpus.entities):
            fh.write(json.dumps({"doc_id": doc_id, "entities": list(entities)}) + "\n")
    write_triplets(corpus.bow, directory / "bow.triplets")


def represent(config: PipelineConfig, use_cache: bool = True) -> tuple[Workspace, WeightedDocTermMatrix]:
    """Ingest and build the configured representation at (alpha_word, alpha_ent)."""
    ws = prepare_workspace(config, use_cache=use_cache, with_index=False)
    point = GridPoint.collapse(config.representation, config.alpha_word, config.alpha_ent, config.n_topics)
    with stage("representation", ws.timings):
        representation = representation_for(ws, point)
    return ws, representation


def factorize(config: PipelineConfig, use_cache: bool = True) -> tuple[TopicModel, list[TopicSummary]]:
    """Representation, NMF and top words without coherence scoring."""
    ws, representation = represent(config, use_cache=use_cache)
    with stage("factorize", ws.timings):
        model = nmf(representation, config.n_topics, config.nmf)
    with stage("top_words", ws.timings):
        topics = top_words(model, config.n_top_words)
    return model, topics


def read_topics(path: Path) -> list[TopicSummary]:
    """Read a topics.json file."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return [TopicSummary.model_validate(topic) for topic in payload]
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read topics: {exc}", path=str(path)) from exc


def score_topics(config: PipelineConfig, topics: list[TopicSummary], use_cache: bool = True) -> CoherenceReport:
    """Score existing topic lists against the configured reference corpus."""
    if use_cache:
        init_db()
    timings: dict[str, float] = {}
    with stage("reference", timings):
        hashes = input_hashes(config)
        preprocess = preprocess_config(config)
        terms = sorted({t for topic in topics for t in topic.terms})
        index = reference_index(config, preprocess, terms, hashes, use_cache)
    with stage("coherence", timings):
        return score_model(index, topics, workers=config.workers)
