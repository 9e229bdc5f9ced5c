"""
Spec File Schemas
Pydantic models untuk semua file input (machine, trace, SEM, experiment, tracker)
Unknown keys ditolak (extra="forbid")

"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.errors import InvalidInputError

logger = logging.getLogger(__name__)

SpecModel = TypeVar("SpecModel", bound=BaseModel)

# (value, numerator, denominator)
ProbabilityRow = Tuple[str, int, int]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ============================================================================
# Machine + trace
# ============================================================================

class AlphabetSpec(StrictModel):
    symbols: List[str] = Field(..., min_length=1)
    null: Optional[str] = Field(default=None, description="Designated null token, must be one of symbols")


class TransitionRow(StrictModel):
    state: str
    hi: str
    lo: str
    next: List[ProbabilityRow] = Field(..., min_length=1, description="(state, numerator, denominator)")


class MachineSpec(StrictModel):
    states: List[str] = Field(..., min_length=1)
    initial: str
    hi_in: Union[List[str], AlphabetSpec]
    lo_in: Union[List[str], AlphabetSpec]
    hi_out: Union[List[str], AlphabetSpec]
    lo_out: Union[List[str], AlphabetSpec]
    transitions: List[TransitionRow]
    outputs: Dict[str, Tuple[str, str]]


class TraceSpec(StrictModel):
    hi_in: Union[List[str], AlphabetSpec]
    lo_in: Union[List[str], AlphabetSpec]
    hi_out: Union[List[str], AlphabetSpec]
    lo_out: Union[List[str], AlphabetSpec]
    inputs: List[Tuple[str, str]] = Field(default_factory=list)
    outputs: List[Tuple[str, str]] = Field(..., min_length=1)


# ============================================================================
# Structural equation model
# ============================================================================

class CptRow(StrictModel):
    given: List[str] = Field(default_factory=list, description="Parent values in parent order")
    dist: List[ProbabilityRow] = Field(..., min_length=1)


class VariableSpec(StrictModel):
    name: str
    range: List[str] = Field(..., min_length=1)
    exogenous: bool = False
    parents: List[str] = Field(default_factory=list)
    marginal: Optional[List[ProbabilityRow]] = None
    cpt: Optional[List[CptRow]] = None

    @field_validator("range")
    @classmethod
    def unique_range(cls, value: List[str]) -> List[str]:
        if len(set(value)) != len(value):
            raise ValueError("range values must be unique")
        return value


class SemSpec(StrictModel):
    variables: List[VariableSpec] = Field(..., min_length=1)


# ============================================================================
# Simulated tracker
# ============================================================================

class AdSpec(StrictModel):
    url: str = Field(..., min_length=1)
    text: str = ""
    topics: List[str] = Field(default_factory=list)


class PoolSpec(StrictModel):
    name: str
    skew: float = Field(default=1.0, ge=0, description="Zipf exponent over the shuffled inventory")
    shuffle_seed: int = 0
    weights: Optional[Dict[str, float]] = Field(default=None, description="Explicit url -> weight, overrides skew")

    @field_validator("weights")
    @classmethod
    def non_negative(cls, value):
        if value is not None and any(w < 0 for w in value.values()):
            raise ValueError("pool weights must be non-negative")
        return value


class TargetingSpec(StrictModel):
    enabled: bool = True
    boost: float = Field(default=10.0, ge=1.0, description="Weight multiplier for ads matching a profile interest")


class TrackerSpec(StrictModel):
    ads: List[AdSpec] = Field(default_factory=list)
    inventory: Dict[str, int] = Field(default_factory=dict, description="topic -> number of generated ads")
    pools: List[PoolSpec] = Field(..., min_length=1)
    switch_interval: int = Field(default=0, ge=0, description="Ticks between pool switches, 0 = never")
    churn_sigma: float = Field(default=0.3, ge=0)
    targeting: TargetingSpec = Field(default_factory=TargetingSpec)
    coupling: float = Field(default=0.0, ge=0)
    fault_prob: float = Field(default=0.0, ge=0, le=1)


# ============================================================================
# Experiment
# ============================================================================

class TreatmentSpec(StrictModel):
    label: str = Field(..., min_length=1)
    interest: Optional[str] = Field(default=None, description="Topic trained during training ticks, None = idle")
    keywords: List[str] = Field(default_factory=list)


class TreatmentPair(StrictModel):
    experimental: TreatmentSpec
    control: TreatmentSpec


class ProbeSpec(StrictModel):
    rounds: int = Field(default=20, ge=2)
    companions: int = Field(default=6, ge=1)
    trained_companions: int = Field(default=3, ge=0)


class ExperimentConfig(StrictModel):
    sample_size: int = Field(..., ge=0)
    group_sizes: Tuple[int, int]
    seed: int
    runs: int = Field(default=20, ge=1)
    training_ticks: int = Field(default=5, ge=0)
    actions_per_tick: int = Field(default=1, ge=1)
    reloads_per_unit: int = Field(default=10, ge=0)
    ads_per_reload: int = Field(default=5, ge=1)
    reloads_per_session: Optional[int] = Field(default=None, ge=1, description="Default: one session per unit")
    collection_context: str = "news"
    treatments: TreatmentPair
    unit_failure_prob: float = Field(default=0.0, ge=0, le=1)
    reload_timeout_prob: float = Field(default=0.0, ge=0, le=1)
    probe: ProbeSpec = Field(default_factory=ProbeSpec)

    @field_validator("group_sizes")
    @classmethod
    def non_negative_groups(cls, value):
        if min(value) < 0:
            raise ValueError("group sizes must be non-negative")
        return value

    @model_validator(mode="after")
    def sizes_add_up(self) -> "ExperimentConfig":
        if sum(self.group_sizes) != self.sample_size:
            raise ValueError(f"group sizes {self.group_sizes} do not add up to sample_size {self.sample_size}")
        return self


class SimulatorConfig(StrictModel):
    tracker: TrackerSpec
    experiment: ExperimentConfig


# ============================================================================
# Helpers
# ============================================================================

def format_validation_error(error: ValidationError) -> str:
    """Satu baris per error, lokasi key disebut eksplisit"""
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item.get("loc", ()))
        if item.get("type") == "extra_forbidden":
            parts.append(f"unknown key '{location}'")
        else:
            parts.append(f"{location}: {item.get('msg')}")
    return "; ".join(parts)


def parse_spec(model: Type[SpecModel], data: dict, source: str = "<memory>") -> SpecModel:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise InvalidInputError(f"{source}: {format_validation_error(e)}") from e


def read_spec(model: Type[SpecModel], path: Union[str, Path]) -> SpecModel:
    """
    Load JSON file dan validasi dengan pydantic model

    Args:
        model: Schema class (MachineSpec, SemSpec, ...)
        path: Lokasi file

    Returns:
        Instance schema yang sudah tervalidasi
    """
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"File not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{path}: malformed JSON ({e})") from e
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: top-level value must be an object")
    logger.debug(f"Loaded {model.__name__} from {path}")
    return parse_spec(model, data, str(path))


def write_spec(spec: BaseModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(spec.model_dump(exclude_none=True), f, indent=2)
    logger.debug(f"Wrote {type(spec).__name__} to {path}")
    return path
