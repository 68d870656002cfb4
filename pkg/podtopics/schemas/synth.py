"""Synthetic planted-topic corpus options."""
from pydantic import BaseModel, ConfigDict, Field, model_validator


class SynthOptions(BaseModel):
    """Shape of a generated corpus with one vocabulary block per planted topic."""
    model_config = ConfigDict(extra="forbid")

    n_docs: int = Field(200, ge=1)
    n_blocks: int = Field(3, ge=1, le=26)
    terms_per_block: int = Field(20, ge=1)
    doc_length: int = Field(12, ge=1)
    seed: int = 0
    entity_rate: float = Field(1.0, ge=0.0, le=1.0)
    entity_confidence: float = Field(0.95, ge=0.0, le=1.0)
    mixing: float = Field(0.0, ge=0.0, lt=1.0)
    dim: int = Field(50, ge=2)
    noise: float = Field(0.07, ge=0.0)
    n_reference_docs: int = Field(400, ge=1)

    @model_validator(mode="after")
    def check_dim(self) -> "SynthOptions":
        if self.dim < self.n_blocks:
            raise ValueError(f"dim ({self.dim}) must be at least n_blocks ({self.n_blocks})")
        if self.mixing > 0 and self.n_blocks < 2:
            raise ValueError("mixing needs at least 2 blocks")
        return self
