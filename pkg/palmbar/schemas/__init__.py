"""Pydantic schemas package."""
from palmbar.schemas.config import ExperimentConfig, Horizon, load_config
from palmbar.schemas.estimate import EstimateWithCI

__all__ = ["EstimateWithCI", "ExperimentConfig", "Horizon", "load_config"]
