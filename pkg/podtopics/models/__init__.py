"""Database models."""
from podtopics.models.run import Sweep, Run, RepresentationKind, RunStatus
from podtopics.models.artifact import StageArtifact

__all__ = ["Sweep", "Run", "RepresentationKind", "RunStatus", "StageArtifact"]
