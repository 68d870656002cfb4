"""Pydantic schemas for input records, configuration and reports."""
from podtopics.schemas.corpus import RawDocument, EntityAnnotation, AnnotationField
from podtopics.schemas.pipeline import PipelineConfig, PreprocessConfig, NMFOptions, InitMethod
from podtopics.schemas.synth import SynthOptions
from podtopics.schemas.report import (
    TermWeight,
    TopicSummary,
    TopicCoherence,
    CoherenceReport,
    DatasetStats,
    RunRecord,
    SweepCell,
    SweepResult,
)

__all__ = [
    "RawDocument",
    "EntityAnnotation",
    "AnnotationField",
    "PipelineConfig",
    "PreprocessConfig",
    "NMFOptions",
    "InitMethod",
    "TermWeight",
    "TopicSummary",
    "TopicCoherence",
    "CoherenceReport",
    "DatasetStats",
    "RunRecord",
    "SweepCell",
    "SweepResult",
    "SynthOptions",
]
