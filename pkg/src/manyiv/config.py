"""Application configuration loaded from environment variables with Pydantic validation."""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="MANYIV_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log_level: str = "INFO"

    # Inference
    alpha: float = Field(default=0.05, gt=0.0, lt=0.5)
    balance_delta: float = Field(default=0.99, gt=0.0, lt=1.0)
    balance_warn: float = Field(default=0.90, gt=0.0, lt=1.0)
    variance_floor: float = Field(default=1e-12, gt=0.0)
    denominator_floor: float = Field(default=1e-12, gt=0.0)
    phi3_max_n: int = Field(default=2000, ge=3)

    # Confidence-set inversion
    grid_points: int = Field(default=2001, ge=11, le=200_001)
    grid_halfwidth_se: float = Field(default=20.0, gt=0.0)
    grid_max_extensions: int = Field(default=8, ge=0, le=40)
    grid_tail_decades: int = Field(default=6, ge=0, le=12)
    bisection_rtol: float = Field(default=1e-6, gt=0.0, lt=1e-2)

    # Pre-test
    pretest_cutoff: float = Field(default=4.14, gt=0.0)
    pretest_benchmark: float = Field(default=2.5, gt=0.0)

    # Ingestion
    min_row_retention: float = Field(default=0.90, gt=0.0, le=1.0)

    # Simulation
    controls_redraws: int = Field(default=20, ge=1, le=1000)
    workers: int = Field(default=1, ge=1, le=256)

    # Numerics
    verify_projections: bool = True


def load_settings() -> Settings:
    """Load and validate settings from environment."""
    return Settings()
