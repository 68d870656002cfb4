"""Content-addressed stage artifact model."""
from sqlalchemy import Column, Integer, String, DateTime
from sqlalchemy.sql import func
from podtopics.database import Base


class StageArtifact(Base):
    """A cached stage output file keyed by the hash of its inputs."""

    __tablename__ = "stage_artifacts"

    id = Column(Integer, primary_key=True, index=True)
    stage = Column(String(50), nullable=False)
    key = Column(String(64), unique=True, index=True, nullable=False)
    path = Column(String(1024), nullable=False)
    created_at = Column(DateTime(timezone=True), server_default=func.now())
