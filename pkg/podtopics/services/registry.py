"""Run registry and content-addressed stage cache backed by SQLAlchemy."""
import json
import logging
from pathlib import Path
from typing import Optional

from sqlalchemy.orm import Session

from podtopics.models.artifact import StageArtifact
from podtopics.models.run import Run, Sweep
from podtopics.schemas.report import RunRecord

logger = logging.getLogger(__name__)


def record_run(
    db: Session,
    record: RunRecord,
    duration: Optional[float] = None,
    sweep_id: Optional[int] = None,
) -> Run:
    """
    Store one grid-point outcome.

    Args:
        db: Database session
        record: Finished or failed run
        duration: Wall-clock seconds
        sweep_id: Owning sweep, if any

    Returns:
        The created row
    """
    db_run = Run(
        run_key=record.run_key,
        representation=record.representation,
        alpha_word=record.alpha_word,
        alpha_ent=record.alpha_ent,
        n_topics=record.n_topics,
        seed=record.seed,
        status=record.status,
        mean_cv=record.coherence.mean_cv if record.coherence else None,
        error=record.error,
        output_dir=record.output_dir,
        config_json=json.dumps(record.config, sort_keys=True),
        duration_seconds=duration,
        sweep_id=sweep_id,
    )

    db.add(db_run)
    db.commit()
    db.refresh(db_run)

    return db_run


def record_sweep(db: Session, name: str, records: list[RunRecord], best_run_key: Optional[str]) -> Sweep:
    """Store a sweep together with all of its runs."""
    db_sweep = Sweep(name=name, n_points=len(records), best_run_key=best_run_key)
    db.add(db_sweep)
    db.commit()
    db.refresh(db_sweep)

    for record in records:
        record_run(db, record, duration=record.timings.get("total"), sweep_id=db_sweep.id)

    db.refresh(db_sweep)
    return db_sweep


def list_runs(db: Session, limit: int = 20, sweep_id: Optional[int] = None) -> list[Run]:
    """Most recent runs first."""
    query = db.query(Run)

    if sweep_id is not None:
        query = query.filter(Run.sweep_id == sweep_id)

    return query.order_by(Run.id.desc()).limit(limit).all()


def find_artifact(db: Session, key: str) -> Optional[Path]:
    """
    Look up a cached stage output.

    A registered file that no longer exists is unregistered and reported as
    a miss.

    Args:
        db: Database session
        key: Content key of the stage inputs

    Returns:
        Path of the cached file, or None
    """
    artifact = db.query(StageArtifact).filter(StageArtifact.key == key).first()

    if not artifact:
        return None

    path = Path(artifact.path)
    if not path.exists():
        logger.warning("Cached %s artifact %s disappeared; recomputing", artifact.stage, path)
        db.delete(artifact)
        db.commit()
        return None

    return path


def register_artifact(db: Session, stage: str, key: str, path: Path) -> StageArtifact:
    """Register (or re-point) the cached output of a stage."""
    artifact = db.query(StageArtifact).filter(StageArtifact.key == key).first()

    if artifact:
        artifact.path = str(path)
    else:
        artifact = StageArtifact(stage=stage, key=key, path=str(path))
        db.add(artifact)

    db.commit()
    db.refresh(artifact)

    return artifact
