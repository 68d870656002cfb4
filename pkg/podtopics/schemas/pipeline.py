"""Pipeline configuration schemas."""
import enum
import json
import sys
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from podtopics.config import get_settings
from podtopics.exceptions import ConfigError
from podtopics.models.run import RepresentationKind

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PATH_FIELDS = (
    "corpus_path",
    "annotations_path",
    "embeddings_path",
    "stopwords_path",
    "names_path",
    "reference_path",
    "output_dir",
)


class InitMethod(str, enum.Enum):
    """NMF factor initialization."""
    NNDSVD = "nndsvd"
    NNDSVDA = "nndsvda"
    RANDOM = "random"
    CUSTOM = "custom"


class NMFOptions(BaseModel):
    """Multiplicative-update solver options."""
    model_config = ConfigDict(extra="forbid")

    max_iter: int = Field(300, ge=1)
    tol: float = Field(1e-5, ge=0.0)
    seed: int = 0
    init: InitMethod = InitMethod.NNDSVDA
    epsilon: float = Field(1e-10, gt=0.0)


def _check_alpha(value: float) -> float:
    if not 0.0 <= value < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {value}")
    return value


class PipelineConfig(BaseModel):
    """Everything one `run` or `sweep` needs; defaults follow the published setup."""
    model_config = ConfigDict(extra="forbid")

    # Inputs and outputs
    corpus_path: Path
    annotations_path: Optional[Path] = None
    embeddings_path: Optional[Path] = None
    stopwords_path: Optional[Path] = None
    names_path: Optional[Path] = None
    reference_path: Optional[Path] = None
    output_dir: Path = Path("runs")

    # Representation
    representation: RepresentationKind = RepresentationKind.NEICE
    alpha_word: float = 0.4
    alpha_ent: float = 0.3
    alpha_word_grid: list[float] = Field(default_factory=lambda: [0.2, 0.3, 0.4, 0.5])
    alpha_ent_grid: list[float] = Field(default_factory=lambda: [0.3, 0.4])
    entity_prefix: Optional[str] = "ENTITY/"
    normalize_rows: bool = False
    dump_matrices: bool = False

    # Preprocessing
    min_term_freq: int = Field(5, ge=1)
    min_confidence: float = Field(0.9, ge=0.0, le=1.0)
    min_doc_tokens: int = Field(3, ge=0)
    dedup_titles: bool = False

    # Topics and evaluation
    n_topics: int = Field(20, ge=2)
    k_values: list[int] = Field(default_factory=lambda: [20, 50, 100, 200])
    n_top_words: int = Field(10, ge=2)
    window_size: int = Field(110, ge=1)
    nmf: NMFOptions = Field(default_factory=NMFOptions)

    workers: int = Field(default_factory=lambda: get_settings().WORKERS, ge=1)

    @field_validator("alpha_word", "alpha_ent")
    @classmethod
    def check_alpha(cls, value: float) -> float:
        return _check_alpha(value)

    @field_validator("alpha_word_grid", "alpha_ent_grid")
    @classmethod
    def check_alpha_grid(cls, values: list[float]) -> list[float]:
        if not values:
            raise ValueError("grid must not be empty")
        return [_check_alpha(v) for v in values]

    @field_validator("k_values")
    @classmethod
    def check_k_values(cls, values: list[int]) -> list[int]:
        if not values:
            raise ValueError("k_values must not be empty")
        if any(k < 2 for k in values):
            raise ValueError("every K must be >= 2")
        return values

    @model_validator(mode="after")
    def check_embeddings(self) -> "PipelineConfig":
        if self.representation != RepresentationKind.TFIDF and self.embeddings_path is None:
            raise ValueError(f"representation '{self.representation.value}' requires embeddings_path")
        return self

    @classmethod
    def load(cls, path: Optional[Path] = None, overrides: Optional[dict[str, Any]] = None) -> "PipelineConfig":
        """
        Build a configuration from a flat TOML file plus flag overrides.

        A `.json` file is read as a run manifest (its "config" object), so a
        finished run can be repeated. Relative paths in the file are resolved
        against the file's directory; overrides win over file values.

        Raises:
            ConfigError: If the file cannot be parsed or a value is invalid
        """
        values: dict[str, Any] = {}
        if path is not None:
            try:
                if Path(path).suffix == ".json":
                    with open(path, encoding="utf-8") as fh:
                        values = json.load(fh)
                    values = values.get("config", values)
                else:
                    with open(path, "rb") as fh:
                        values = tomllib.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config file {path}: {exc}") from exc
            except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
                raise ConfigError(f"invalid config file {path}: {exc}") from exc
            base = Path(path).resolve().parent
            for key in PATH_FIELDS:
                if isinstance(values.get(key), str) and not Path(values[key]).is_absolute():
                    values[key] = str(base / values[key])
        if overrides:
            nmf_overrides = {k[len("nmf."):]: v for k, v in overrides.items() if k.startswith("nmf.")}
            values.update({k: v for k, v in overrides.items() if not k.startswith("nmf.") and v is not None})
            if nmf_overrides:
                values["nmf"] = {**values.get("nmf", {}), **{k: v for k, v in nmf_overrides.items() if v is not None}}
        try:
            return cls(**values)
        except ValidationError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    def snapshot(self) -> dict[str, Any]:
        """JSON-ready view of the configuration."""
        return self.model_dump(mode="json")


class PreprocessConfig(BaseModel):
    """Resolved preprocessing rules: word lists loaded, thresholds checked."""
    model_config = ConfigDict(frozen=True)

    stopwords: frozenset[str] = frozenset()
    names: frozenset[str] = frozenset()
    min_term_freq: int = Field(5, ge=1)
    min_confidence: float = Field(0.9, ge=0.0, le=1.0)
    min_doc_tokens: int = Field(3, ge=0)
    dedup_titles: bool = False
