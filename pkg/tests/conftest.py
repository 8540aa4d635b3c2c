"""
Shared models and streams.
"""
import json
from pathlib import Path
from typing import Any, Callable, Dict

import pytest

from palmbar.models.distributions import (
    Deterministic,
    Erlang,
    Exponential,
    Hyperexponential2,
    Uniform,
)
from palmbar.models.network import FiniteQueueModel, NetworkModel
from palmbar.services.stochastics import RngStream

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def config_dir() -> Path:
    """Bundled experiment documents."""
    return CONFIG_DIR


@pytest.fixture
def rng() -> RngStream:
    return RngStream(12345)


@pytest.fixture
def mm1() -> NetworkModel:
    """M/M/1 with rho = 0.5."""
    return NetworkModel(d=1, arrivals={1: Exponential(rate=0.5)}, services=[Exponential(rate=1.0)])


@pytest.fixture
def md1() -> NetworkModel:
    return NetworkModel(d=1, arrivals={1: Exponential(rate=0.5)}, services=[Deterministic(value=1.0)])


@pytest.fixture
def tandem() -> NetworkModel:
    """Exponential tandem, lam = 1, mu = (2, 1.25)."""
    return NetworkModel(
        d=2,
        arrivals={1: Exponential(rate=1.0)},
        services=[Exponential(rate=2.0), Exponential(rate=1.25)],
        routing=[[0.0, 1.0], [0.0, 0.0]],
    )


@pytest.fixture
def gj_tandem() -> NetworkModel:
    """Tandem with Erlang input and non-exponential services, rho = (0.5, 2/3)."""
    return NetworkModel(
        d=2,
        arrivals={1: Erlang(k=2, rate=2.0)},
        services=[Uniform(lower=0.2, upper=0.8), Hyperexponential2(p=0.5, rates=(1.0, 3.0))],
        routing=[[0.0, 1.0], [0.0, 0.0]],
    )


@pytest.fixture
def feedback() -> NetworkModel:
    """Single station with feedback probability 1/2, lam = 1, mu = 4."""
    return NetworkModel(
        d=1,
        arrivals={1: Exponential(rate=1.0)},
        services=[Exponential(rate=4.0)],
        routing=[[0.5]],
    )


@pytest.fixture
def gj_feedback() -> NetworkModel:
    return NetworkModel(
        d=1,
        arrivals={1: Erlang(k=2, rate=2.0)},
        services=[Uniform(lower=0.1, upper=0.3)],
        routing=[[0.5]],
    )


@pytest.fixture
def dd1() -> NetworkModel:
    """D/D/1 with T_e = 2 and T_s = 1."""
    return NetworkModel(d=1, arrivals={1: Deterministic(value=2.0)}, services=[Deterministic(value=1.0)])


@pytest.fixture
def dd1_ties() -> NetworkModel:
    """D/D/1 with T_e = T_s = 1: arrivals and completions fire together."""
    return NetworkModel(d=1, arrivals={1: Deterministic(value=1.0)}, services=[Deterministic(value=1.0)])


@pytest.fixture
def mm1_finite() -> FiniteQueueModel:
    """M/M/1/2 with rho = 0.8."""
    return FiniteQueueModel(arrival=Exponential(rate=0.8), service=Exponential(rate=1.0), ell0=2)


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[Dict[str, Any]], Path]:
    """Write a document into tmp_path and return its path."""

    def write(document: Dict[str, Any], name: str = "experiment.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document, indent=2), encoding="utf-8")
        return path

    return write
