"""Corpus and entity-annotation record schemas."""
import enum

from pydantic import BaseModel, Field, model_validator


class AnnotationField(str, enum.Enum):
    """Document field an annotation's character offsets point into."""
    TITLE = "title"
    DESCRIPTION = "description"


class RawDocument(BaseModel):
    """One podcast show as found in the corpus file."""
    id: str = Field(..., min_length=1)
    title: str = ""
    description: str = ""

    def field_text(self, field: AnnotationField) -> str:
        return self.title if field == AnnotationField.TITLE else self.description


class EntityAnnotation(BaseModel):
    """A linked entity mention produced by an external entity linker."""
    doc_id: str = Field(..., min_length=1)
    field: AnnotationField
    start: int = Field(..., ge=0)
    end: int = Field(..., ge=0)
    entity_id: str = Field(..., min_length=1)
    confidence: float = Field(..., ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_span(self) -> "EntityAnnotation":
        if self.end <= self.start:
            raise ValueError("annotation span must satisfy start < end")
        return self
