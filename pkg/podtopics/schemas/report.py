"""Topic, coherence and run report schemas."""
from typing import Any, Optional

from pydantic import BaseModel, Field

from podtopics.models.run import RepresentationKind, RunStatus


class TermWeight(BaseModel):
    """One top word of a topic with its topic-word weight."""
    term: str
    weight: float


class TopicSummary(BaseModel):
    """The T highest-weighted vocabulary terms of one topic."""
    topic_id: int = Field(..., ge=0)
    top_terms: list[TermWeight]

    @property
    def terms(self) -> list[str]:
        return [tw.term for tw in self.top_terms]


class TopicCoherence(BaseModel):
    """C_V score of one topic with its NPMI matrix and diagnostics."""
    topic_id: int
    terms: list[str]
    cv: float = Field(..., ge=-1.0 - 1e-9, le=1.0 + 1e-9)
    npmi: list[list[float]]
    missing_terms: list[str] = Field(default_factory=list)
    zero_norm_terms: list[str] = Field(default_factory=list)


class CoherenceReport(BaseModel):
    """Per-topic C_V scores and their arithmetic mean."""
    topics: list[TopicCoherence]
    mean_cv: float
    window_size: int
    window_count: int
    missing_terms: list[str] = Field(default_factory=list)


class DatasetStats(BaseModel):
    """Corpus summary with the columns of the dataset overview table."""
    n_documents: int
    vocabulary_size: int
    n_entity_mentions: int
    n_documents_with_entities: int
    mean_words_title: float
    mean_words_description: float


class RunRecord(BaseModel):
    """Everything produced by one grid point."""
    run_key: str
    status: RunStatus
    representation: RepresentationKind
    alpha_word: Optional[float] = None
    alpha_ent: Optional[float] = None
    n_topics: int
    seed: int
    config: dict[str, Any]
    topics: list[TopicSummary] = Field(default_factory=list)
    coherence: Optional[CoherenceReport] = None
    stats: Optional[DatasetStats] = None
    timings: dict[str, float] = Field(default_factory=dict)
    error: Optional[str] = None
    output_dir: Optional[str] = None


class SweepCell(BaseModel):
    """Mean C_V of one (alpha_word, alpha_ent, K) point; None when the run failed."""
    alpha_word: Optional[float] = None
    alpha_ent: Optional[float] = None
    n_topics: int
    mean_cv: Optional[float] = None
    run_key: str


class SweepResult(BaseModel):
    """All records of a sweep plus its comparison table."""
    records: list[RunRecord]
    cells: list[SweepCell]
    best_run_key: Optional[str] = None

    def table_rows(self) -> list[tuple[Optional[float], Optional[float]]]:
        """Distinct alpha pairs in grid order."""
        rows: list[tuple[Optional[float], Optional[float]]] = []
        for cell in self.cells:
            pair = (cell.alpha_word, cell.alpha_ent)
            if pair not in rows:
                rows.append(pair)
        return rows

    def table_columns(self) -> list[int]:
        """Distinct K values in grid order."""
        columns: list[int] = []
        for cell in self.cells:
            if cell.n_topics not in columns:
                columns.append(cell.n_topics)
        return columns
