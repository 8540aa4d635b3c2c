"""
Experiment document schemas.
"""
import hashlib
import json
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Union

from pydantic import BaseModel, Field, ValidationError, model_validator

from palmbar.core.config import settings
from palmbar.core.errors import ConfigError
from palmbar.models.distributions import DistributionSpec
from palmbar.models.network import FiniteQueueModel, NetworkModel


class StrictModel(BaseModel):
    """Unknown keys are rejected everywhere in a document."""

    class Config:
        """Pydantic config."""
        extra = "forbid"


class Horizon(StrictModel):
    """Event budget and/or time limit of one replication."""

    events: Optional[int] = Field(default=None, ge=0)
    time: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def check_some_limit(self) -> "Horizon":
        if self.events is None and self.time is None:
            raise ValueError("horizon needs events or time")
        return self


class Outputs(StrictModel):
    directory: str = "results"
    formats: List[Literal["csv", "json"]] = ["csv", "json"]
    event_log: bool = False
    full_state_log: bool = False


# Test functions

class ConstantSpec(StrictModel):
    kind: Literal["constant"] = "constant"
    c: float = 1.0


class ResidualExponentialSpec(StrictModel):
    kind: Literal["residual_exponential"] = "residual_exponential"
    clock: int = Field(ge=1)
    a: float = Field(default=1.0, ge=0)


class LinearResidualSpec(StrictModel):
    kind: Literal["linear_residual"] = "linear_residual"
    clock: int = Field(ge=1)


class ExponentialSpec(StrictModel):
    """Exponential family with solved exponents; cutoff defaults to 1/r."""

    kind: Literal["exponential"] = "exponential"
    theta: Union[float, List[float]]
    r: float = Field(default=1.0, gt=0, le=1)
    cutoff: Optional[float] = Field(default=None, gt=0)


TestFunctionSpec = Annotated[
    Union[ConstantSpec, ResidualExponentialSpec, LinearResidualSpec, ExponentialSpec],
    Field(discriminator="kind"),
]


# Experiments

class SimulateExperiment(StrictModel):
    kind: Literal["simulate"] = "simulate"


class TrafficExperiment(StrictModel):
    kind: Literal["traffic"] = "traffic"


class PalmExperiment(StrictModel):
    """Palm expectation of a pre-state functional plus PASTA and service-mark checks."""

    kind: Literal["palm"] = "palm"
    which: Union[int, Literal["N0", "Nall"]] = 1
    functional: Literal["constant", "pre_queue_length", "pre_queue_indicator"] = "pre_queue_length"
    station: int = Field(default=1, ge=1)
    k: int = Field(default=0, ge=0)
    pasta_tolerance: float = Field(default=0.01, gt=0)
    ks_level: float = Field(default=1e-3, gt=0, lt=1)
    ks_samples: int = Field(default=100_000, ge=10)


class BarCheckExperiment(StrictModel):
    kind: Literal["bar-check"] = "bar-check"
    test_functions: List[TestFunctionSpec] = Field(default_factory=lambda: [ConstantSpec()])
    theta_grid: List[Union[float, List[float]]] = Field(default_factory=list)
    r: float = Field(default=1.0, gt=0, le=1)
    decomposition: bool = True
    rate_conservation: bool = True


class HtSweepExperiment(StrictModel):
    kind: Literal["ht-sweep"] = "ht-sweep"
    arrival: DistributionSpec
    service: DistributionSpec
    b: float
    ell0: float = Field(gt=0)
    r_grid: List[float]
    events_per_r: Optional[int] = Field(default=None, ge=1)
    mgf_thetas: List[float] = Field(default_factory=lambda: [-2.0, -1.0, 0.5, 2.0])
    p0_tolerance: float = 0.15
    full_tolerance: float = 0.25
    ks_threshold: float = 0.05


class OracleCompareExperiment(StrictModel):
    kind: Literal["oracle-compare"] = "oracle-compare"
    tolerance: float = Field(default=0.01, gt=0)


ExperimentSpec = Annotated[
    Union[
        SimulateExperiment,
        TrafficExperiment,
        PalmExperiment,
        BarCheckExperiment,
        HtSweepExperiment,
        OracleCompareExperiment,
    ],
    Field(discriminator="kind"),
]

ModelSpec = Annotated[Union[NetworkModel, FiniteQueueModel], Field(discriminator="kind")]


class ExperimentConfig(StrictModel):
    """One experiment document."""

    model: Optional[ModelSpec] = None
    horizon: Horizon = Field(default_factory=lambda: Horizon(events=100_000))
    warmup: float = Field(default=settings.DEFAULT_WARMUP, ge=0, le=1)
    seed: Optional[int] = Field(default=None, ge=0)
    replications: int = Field(default=1, ge=1)
    allow_unstable: bool = False
    outputs: Outputs = Field(default_factory=Outputs)
    experiment: ExperimentSpec

    @model_validator(mode="after")
    def check_model_present(self) -> "ExperimentConfig":
        if self.model is None and self.experiment.kind != "ht-sweep":
            raise ValueError(f"experiment '{self.experiment.kind}' needs a model block")
        return self

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON dump."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def with_overrides(
        self,
        seed: Optional[int] = None,
        events: Optional[int] = None,
        warmup: Optional[float] = None,
        replications: Optional[int] = None,
        directory: Optional[str] = None,
        formats: Optional[Sequence[str]] = None,
    ) -> "ExperimentConfig":
        """Apply command-line overrides and resolve the seed."""
        data = self.model_dump(mode="json")
        data["seed"] = settings.resolve_seed(seed, self.seed)
        if events is not None:
            data["horizon"] = {"events": events}
        if warmup is not None:
            data["warmup"] = warmup
        if replications is not None:
            data["replications"] = replications
        if directory is not None:
            data["outputs"]["directory"] = directory
        if formats is not None:
            data["outputs"]["formats"] = list(formats)
        return parse_config(data)


def _locate(text: str, loc: Sequence[Union[str, int]]) -> Optional[int]:
    """Line of the deepest named key of ``loc`` in the document, if found."""
    for part in reversed(loc):
        if isinstance(part, str):
            needle = f'"{part}"'
            for number, line in enumerate(text.splitlines(), start=1):
                if needle in line:
                    return number
    return None


def parse_config(data: Dict[str, Any], text: Optional[str] = None) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        loc = tuple(error["loc"])
        line = _locate(text, loc) if text is not None else None
        raise ConfigError(error["msg"], field=loc, line=line) from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a JSON experiment document."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ConfigError("the document must be a JSON object", line=1)
    return parse_config(data, text)
