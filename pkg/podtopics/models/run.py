"""Sweep and run registry models."""
from sqlalchemy import Column, Integer, String, Text, Float, ForeignKey, DateTime, Enum
from sqlalchemy.orm import relationship
from sqlalchemy.sql import func
import enum
from podtopics.database import Base


class RepresentationKind(str, enum.Enum):
    """Document-term weighting fed to NMF."""
    TFIDF = "tfidf"
    CLUWORDS = "cluwords"
    NEICE = "neice"


class RunStatus(str, enum.Enum):
    """Outcome of one grid point."""
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class Sweep(Base):
    """One sweep invocation grouping its grid-point runs."""

    __tablename__ = "sweeps"

    id = Column(Integer, primary_key=True, index=True)
    name = Column(String(200), nullable=False)
    n_points = Column(Integer, nullable=False, default=0)
    best_run_key = Column(String(64), nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now())

    # Relationships
    runs = relationship("Run", back_populates="sweep", cascade="all, delete-orphan")


class Run(Base):
    """One (representation, alpha_word, alpha_ent, K) pipeline execution."""

    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    run_key = Column(String(64), index=True, nullable=False)
    representation = Column(Enum(RepresentationKind, values_callable=lambda obj: [e.value for e in obj]), nullable=False)
    alpha_word = Column(Float, nullable=True)
    alpha_ent = Column(Float, nullable=True)
    n_topics = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    status = Column(Enum(RunStatus, values_callable=lambda obj: [e.value for e in obj]), nullable=False)
    mean_cv = Column(Float, nullable=True)
    error = Column(Text, nullable=True)
    output_dir = Column(String(1024), nullable=True)
    config_json = Column(Text, nullable=False)
    duration_seconds = Column(Float, nullable=True)
    sweep_id = Column(Integer, ForeignKey("sweeps.id", ondelete="CASCADE"), nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now())

    # Relationships
    sweep = relationship("Sweep", back_populates="runs")
