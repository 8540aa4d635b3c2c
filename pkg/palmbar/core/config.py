"""
Process-level settings.
"""
from typing import Optional

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Toolkit settings, overridable through PALM_BAR_* environment variables."""

    # App Info
    APP_NAME: str = "palmbar"
    APP_VERSION: str = "0.1.0"
    LOG_LEVEL: str = "WARNING"

    # Reproducibility
    SEED: Optional[int] = None  # PALM_BAR_SEED, used when neither flag nor config sets one

    # Simulation
    DEFAULT_WARMUP: float = 0.2
    BATCH_COUNT: int = 64
    TIE_TOLERANCE: float = 1e-12
    VARIATE_BLOCK: int = 1024

    # Numerics
    ROOT_TOLERANCE: float = 1e-9
    QUADRATURE_TOLERANCE: float = 1e-10
    SPECTRAL_TOLERANCE: float = 1e-9
    IDENTITY_TOLERANCE: float = 1e-8
    NORMALIZATION_TOLERANCE: float = 1e-12  # per support point
    UNBOUNDED_GUARD: float = 1e12

    def resolve_seed(self, *candidates: Optional[int]) -> int:
        """Return the first seed that is set, falling back to PALM_BAR_SEED, then 0."""
        for candidate in candidates:
            if candidate is not None:
                return candidate
        return self.SEED if self.SEED is not None else 0

    class Config:
        """Pydantic config."""
        env_prefix = "PALM_BAR_"
        env_file = ".env"
        case_sensitive = True


settings = Settings()
