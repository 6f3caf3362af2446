"""Core configuration and value models for opaque-virt."""

from __future__ import annotations

import math
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class EntropyMethod(str, Enum):
    """Per-column diversity measure."""
    SHANNON = "shannon"
    RICHNESS = "richness"
    SIMPSON = "simpson"
    # Concentration form (sum of squared frequencies); grows as diversity falls.
    SIMPSON_RAW = "simpson_raw"


class ScalerKind(str, Enum):
    """Scaling function mapping normalised entropy to a weight."""
    HYPERBOLIC = "hyperbolic"
    EXPONENTIAL = "exponential"
    SIGMOID = "sigmoid"
    THRESHOLD = "threshold"


class MatchStrategy(str, Enum):
    """Response selection strategy."""
    HASH_LOOKUP = "hash_lookup"
    NW_PLAIN = "nw_plain"
    NW_WEIGHTED = "nw_weighted"


class FramingMode(str, Enum):
    """How message boundaries are found on a TCP stream."""
    CONNECTION_PER_MESSAGE = "connection_per_message"
    LENGTH_PREFIXED = "length_prefixed"
    DELIMITED = "delimited"


class ProtocolKind(str, Enum):
    """Synthetic protocol families understood by the evaluation decoders."""
    DIRECTORY_TEXT = "directory_text"
    FIXED_WIDTH_BINARY = "fixed_width_binary"


class ScoringParams(BaseModel):
    """Needleman-Wunsch scoring constants."""
    d_identical: float = Field(default=1.0)
    d_differing: float = Field(default=-1.0)
    d_gap: float = Field(default=0.0, le=0.0)

    @model_validator(mode="after")
    def validate_ordering(self) -> "ScoringParams":
        """Distance normalisation needs identical pairs to outscore differing ones."""
        if not self.d_identical > self.d_differing:
            raise ValueError(
                f"d_identical ({self.d_identical}) must be greater than "
                f"d_differing ({self.d_differing})"
            )
        return self

    def pair(self, a: int, b: int) -> float:
        """Score two aligned octets."""
        return self.d_identical if a == b else self.d_differing


_SCALER_PARAMETERS: Dict[ScalerKind, tuple] = {
    ScalerKind.HYPERBOLIC: ("a", "c"),
    ScalerKind.EXPONENTIAL: ("k",),
    ScalerKind.SIGMOID: ("k", "tau"),
    ScalerKind.THRESHOLD: ("tau",),
}


class ScalerSpec(BaseModel):
    """Scaling function choice and its parameters."""
    kind: ScalerKind
    a: Optional[float] = Field(default=None, gt=0.0)
    c: Optional[float] = Field(default=None, gt=0.0)
    k: Optional[float] = Field(default=None, gt=0.0)
    tau: Optional[float] = Field(default=None, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def validate_parameters(self) -> "ScalerSpec":
        """Every parameter of the selected kind must be present."""
        missing = [
            name for name in _SCALER_PARAMETERS[self.kind]
            if getattr(self, name) is None
        ]
        if missing:
            raise ValueError(
                f"Scaler '{self.kind.value}' requires parameter(s): {', '.join(missing)}"
            )
        return self

    def parameters(self) -> Dict[str, float]:
        """Parameters used by the selected kind, in declaration order."""
        return {name: getattr(self, name) for name in _SCALER_PARAMETERS[self.kind]}

    def describe(self) -> str:
        """Short label such as ``hyperbolic(a=1,c=10)``."""
        params = ",".join(f"{name}={value:g}" for name, value in self.parameters().items())
        return f"{self.kind.value}({params})"

    def to_file_dict(self) -> Dict[str, Any]:
        """Serialise as ``{kind, params...}`` for weights files."""
        return {"kind": self.kind.value, **self.parameters()}

    @classmethod
    def hyperbolic(cls, a: float, c: float) -> "ScalerSpec":
        return cls(kind=ScalerKind.HYPERBOLIC, a=a, c=c)

    @classmethod
    def exponential(cls, k: float) -> "ScalerSpec":
        return cls(kind=ScalerKind.EXPONENTIAL, k=k)

    @classmethod
    def sigmoid(cls, k: float, tau: float) -> "ScalerSpec":
        return cls(kind=ScalerKind.SIGMOID, k=k, tau=tau)

    @classmethod
    def threshold(cls, tau: float) -> "ScalerSpec":
        return cls(kind=ScalerKind.THRESHOLD, tau=tau)


class WeightsVector(BaseModel):
    """Per-column alignment weights derived from a library's requests."""
    weights: List[float] = Field(min_length=1)
    default_weight: float
    method: EntropyMethod
    scaler: ScalerSpec
    library_fingerprint: Optional[str] = None

    @field_validator("weights")
    @classmethod
    def validate_weights(cls, v: List[float]) -> List[float]:
        """Weights must be finite and in (0, 1]."""
        for position, weight in enumerate(v, start=1):
            if not math.isfinite(weight) or not 0.0 < weight <= 1.0:
                raise ValueError(f"Weight at column {position} out of (0, 1]: {weight}")
        return v

    @field_validator("default_weight")
    @classmethod
    def validate_default_weight(cls, v: float) -> float:
        """Default weight obeys the same bounds as column weights."""
        if not math.isfinite(v) or not 0.0 < v <= 1.0:
            raise ValueError(f"default_weight out of (0, 1]: {v}")
        return v

    @property
    def length(self) -> int:
        """Number of columns L covered by explicit weights."""
        return len(self.weights)

    def weight_at(self, k: int) -> float:
        """Weight for 1-based column ``k``; columns beyond L use the default."""
        if k < 1:
            raise IndexError(f"Weight columns are 1-based, got {k}")
        if k <= len(self.weights):
            return self.weights[k - 1]
        return self.default_weight

    @classmethod
    def uniform(cls, length: int, value: float = 1.0) -> "WeightsVector":
        """Flat weights; with value 1 the weighted alignment equals the plain one."""
        return cls(
            weights=[value] * length,
            default_weight=value,
            method=EntropyMethod.RICHNESS,
            scaler=ScalerSpec.hyperbolic(a=1.0, c=1.0),
        )


class MatcherConfig(BaseModel):
    """Configuration for response selection."""
    strategy: MatchStrategy = MatchStrategy.NW_PLAIN
    scoring: ScoringParams = Field(default_factory=ScoringParams)
    weights: Optional[WeightsVector] = None
    tie_break: str = Field(default="lowest_index")

    @field_validator("tie_break")
    @classmethod
    def validate_tie_break(cls, v: str) -> str:
        """Only the lowest-index policy is supported."""
        if v != "lowest_index":
            raise ValueError(f"Invalid tie_break policy: {v}")
        return v

    @model_validator(mode="after")
    def validate_weights_presence(self) -> "MatcherConfig":
        """Weights are required by, and only accepted with, nw_weighted."""
        if self.strategy == MatchStrategy.NW_WEIGHTED and self.weights is None:
            raise ValueError("Strategy nw_weighted requires a weights vector")
        if self.strategy != MatchStrategy.NW_WEIGHTED and self.weights is not None:
            raise ValueError(
                f"Strategy {self.strategy.value} does not accept a weights vector"
            )
        return self


class Endpoint(BaseModel):
    """TCP host/port pair."""
    host: str = Field(default="127.0.0.1", min_length=1)
    port: int = Field(ge=0, le=65535)

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        """Parse ``HOST:PORT``."""
        host, sep, port = text.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ValueError(f"Endpoint must look like HOST:PORT, got '{text}'")
        return cls(host=host, port=int(port))

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"


class FramingSpec(BaseModel):
    """Message framing on the wire."""
    mode: FramingMode = FramingMode.LENGTH_PREFIXED
    delimiter: bytes = b""
    max_message_bytes: int = Field(default=1 << 20, gt=0)
    response_timeout_ms: int = Field(default=500, gt=0)

    @model_validator(mode="after")
    def validate_delimiter(self) -> "FramingSpec":
        """Delimited framing needs a non-empty delimiter."""
        if self.mode == FramingMode.DELIMITED and not self.delimiter:
            raise ValueError("Delimited framing requires a non-empty delimiter")
        return self

    @property
    def response_timeout(self) -> float:
        """Response window in seconds."""
        return self.response_timeout_ms / 1000.0


class RetryConfig(BaseModel):
    """Configuration for retry logic."""
    max_attempts: int = Field(default=3, ge=1, le=10)
    initial_delay: float = Field(default=0.1, ge=0.0)
    max_delay: float = Field(default=2.0, ge=0.0)
    exponential_base: float = Field(default=2.0, ge=1.1)
    jitter: bool = Field(default=True)


class CircuitBreakerConfig(BaseModel):
    """Configuration for the upstream circuit breaker."""
    failure_threshold: int = Field(default=5, ge=1)
    recovery_timeout: float = Field(default=5.0, ge=0.05)


class SyntheticProtocolSpec(BaseModel):
    """Parameters of a synthetic interaction library."""
    kind: ProtocolKind
    n_interactions: int = Field(gt=0)
    n_operation_types: int = Field(ge=2)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    opcodes: Optional[str] = None
    surname_pool: Optional[List[str]] = None

    @model_validator(mode="after")
    def validate_operation_alphabet(self) -> "SyntheticProtocolSpec":
        """Directory opcodes are distinct letters; fixed-width codes fit in 7 bits."""
        if self.kind == ProtocolKind.DIRECTORY_TEXT:
            alphabet = self.opcodes or "SADMCB"
            if len(set(alphabet)) != len(alphabet) or not alphabet.isalpha():
                raise ValueError(f"Opcode alphabet must be distinct letters: {alphabet}")
            if self.n_operation_types > len(alphabet):
                raise ValueError(
                    f"{self.n_operation_types} operation types requested but the "
                    f"opcode alphabet has {len(alphabet)}"
                )
        elif self.n_operation_types > 0x7F:
            raise ValueError("Fixed-width op codes are limited to 127 operation types")
        if self.surname_pool is not None:
            if not self.surname_pool:
                raise ValueError("surname_pool must not be empty")
            for name in self.surname_pool:
                if not name or not (name.isascii() and name.isalpha()):
                    raise ValueError(f"Surnames must be non-empty ASCII letters: {name!r}")
        return self


class StrategySpec(BaseModel):
    """A strategy under evaluation; weights are derived per training fold."""
    strategy: MatchStrategy
    scoring: ScoringParams = Field(default_factory=ScoringParams)
    method: Optional[EntropyMethod] = None
    scaler: Optional[ScalerSpec] = None

    @model_validator(mode="after")
    def validate_weighting(self) -> "StrategySpec":
        """Weighted strategies name their entropy method and scaler."""
        if self.strategy == MatchStrategy.NW_WEIGHTED:
            if self.method is None or self.scaler is None:
                raise ValueError("nw_weighted evaluation needs an entropy method and scaler")
        elif self.method is not None or self.scaler is not None:
            raise ValueError(
                f"Strategy {self.strategy.value} takes no entropy method or scaler"
            )
        return self

    @property
    def label(self) -> str:
        """Human readable strategy label."""
        if self.strategy == MatchStrategy.NW_WEIGHTED:
            return f"nw_weighted[{self.method.value}/{self.scaler.describe()}]"
        return self.strategy.value

    def matcher_config(self, weights: Optional[WeightsVector] = None) -> MatcherConfig:
        """Build the matcher configuration for one training fold."""
        return MatcherConfig(strategy=self.strategy, scoring=self.scoring, weights=weights)


def _default_strategies() -> List[StrategySpec]:
    return [
        StrategySpec(strategy=MatchStrategy.HASH_LOOKUP),
        StrategySpec(strategy=MatchStrategy.NW_PLAIN),
        StrategySpec(
            strategy=MatchStrategy.NW_WEIGHTED,
            method=EntropyMethod.SHANNON,
            scaler=ScalerSpec.hyperbolic(a=1.0, c=10.0),
        ),
    ]


class EvaluationConfig(BaseModel):
    """Repeated k-fold cross-validation settings."""
    k: int = Field(default=10, ge=2)
    repeats: int = Field(default=10, ge=1)
    seeds: List[int] = Field(default_factory=list)
    strategies: List[StrategySpec] = Field(default_factory=_default_strategies, min_length=1)

    @field_validator("seeds")
    @classmethod
    def validate_seed_range(cls, v: List[int]) -> List[int]:
        """Seeds are unsigned 64-bit integers."""
        for seed in v:
            if not 0 <= seed < 2 ** 64:
                raise ValueError(f"Seed out of 64-bit range: {seed}")
        return v

    @model_validator(mode="after")
    def validate_seed_count(self) -> "EvaluationConfig":
        """One seed per repeat; defaults to 0..repeats-1."""
        if not self.seeds:
            self.seeds = list(range(self.repeats))
        elif len(self.seeds) != self.repeats:
            raise ValueError(
                f"Expected {self.repeats} seeds (one per repeat), got {len(self.seeds)}"
            )
        return self


class AccuracyRow(BaseModel):
    """Accuracy of one strategy at one parameter point."""
    label: str
    strategy: MatchStrategy
    entropy_method: Optional[EntropyMethod] = None
    scaler: Optional[Dict[str, Any]] = None
    params: str = ""
    valid: int = Field(default=0, ge=0)
    invalid: int = Field(default=0, ge=0)
    per_repeat: List[float] = Field(default_factory=list)
    mean: float = 0.0
    std: float = 0.0

    @property
    def evaluated(self) -> int:
        return self.valid + self.invalid

    @property
    def accuracy(self) -> float:
        """Pooled accuracy valid / (valid + invalid)."""
        if self.evaluated == 0:
            return 0.0
        return self.valid / self.evaluated


class AccuracyReport(BaseModel):
    """Cross-validation outcome for every evaluated strategy."""
    dataset: str
    kind: ProtocolKind
    k: int
    repeats: int
    seeds: List[int]
    rows: List[AccuracyRow] = Field(default_factory=list)

    def row(self, label: str) -> AccuracyRow:
        """Find a row by label."""
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(f"No accuracy row labelled '{label}'")

    def by_strategy(self, strategy: MatchStrategy) -> List[AccuracyRow]:
        """All rows for one strategy."""
        return [row for row in self.rows if row.strategy == strategy]
