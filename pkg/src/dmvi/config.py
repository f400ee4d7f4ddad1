"""
DMVI Engine Configuration
Process-level defaults via Pydantic v2 settings, overridable through the environment

Environment Variables (prefix DMVI_):
    DMVI_LOG_LEVEL: DEBUG | INFO | WARNING | ERROR
    DMVI_LOG_FORMAT: 'console' | 'json'
    DMVI_MAX_STEPS_SMALL / DMVI_MAX_STEPS_LARGE: training step caps
"""

from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Engine defaults for the benchmark protocol, overridable from the environment
    """

    # Logging
    LOG_LEVEL: str = Field(default="INFO", description="Logging level")
    LOG_FORMAT: Literal["console", "json"] = Field(default="console", description="structlog renderer")
    LOG_EVERY: int = Field(default=1000, ge=1, description="Training progress log interval (steps)")

    # Optimization protocol
    BATCH_SIZE: int = Field(default=32, ge=1)
    LEARNING_RATE: float = Field(default=1e-3, gt=0.0)
    MC_SAMPLES: int = Field(default=5, ge=1, description="Monte Carlo samples per objective estimate")
    ADAMW_BETA1: float = Field(default=0.9, ge=0.0, lt=1.0)
    ADAMW_BETA2: float = Field(default=0.999, ge=0.0, lt=1.0)
    ADAMW_EPS: float = Field(default=1e-8, gt=0.0)
    ADAMW_WEIGHT_DECAY: float = Field(default=1e-4, ge=0.0)

    # Convergence
    CONVERGENCE_WINDOW: int = Field(default=500, ge=1, description="Moving-average window (steps)")
    CONVERGENCE_TOLERANCE: float = Field(default=1e-3, gt=0.0, description="Relative improvement threshold")
    CONVERGENCE_PATIENCE: int = Field(default=3, ge=1, description="Consecutive stalled windows before stopping")
    MAX_STEPS_SMALL: int = Field(default=20_000, ge=1, description="Step cap for N <= SMALL_DATA_LIMIT")
    MAX_STEPS_LARGE: int = Field(default=50_000, ge=1, description="Step cap for larger data sets")
    SMALL_DATA_LIMIT: int = Field(default=100, ge=1)

    # Evaluation
    POSTERIOR_DRAWS: int = Field(default=20_000, ge=1)
    EVAL_MC_SAMPLES: int = Field(default=10_000, ge=1)
    SAMPLE_CHUNK: int = Field(default=5_000, ge=1, description="Draws per graph-free sampling batch")

    # Diffusion guide
    N_DIFFUSION: int = Field(default=50, ge=2)
    BETA_MIN: float = Field(default=1e-4, gt=0.0, lt=1.0)
    BETA_MAX: float = Field(default=0.02, gt=0.0, lt=1.0)
    SOLVER_STEPS: int = Field(default=10, ge=1)
    SOLVER_ORDER: int = Field(default=1)
    TIME_EMBEDDING_DIM: int = Field(default=16, ge=2)

    # Networks
    HIDDEN_DIM: int = Field(default=256, ge=1)
    DROPOUT_RATE: float = Field(default=0.1, ge=0.0, lt=1.0)
    INIT_STD: float = Field(default=0.01, gt=0.0)
    IAF_LOG_SCALE_CLAMP: float = Field(default=7.0, gt=0.0)

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Normalize and check the log level name"""
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return level

    @field_validator("SOLVER_ORDER")
    @classmethod
    def validate_solver_order(cls, v: int) -> int:
        """Only first- and third-order solvers are available"""
        if v not in (1, 3):
            raise ValueError("SOLVER_ORDER must be 1 or 3")
        return v

    def max_steps_for(self, n_data: int) -> int:
        """Default step cap for a data set of size n_data"""
        if n_data <= self.SMALL_DATA_LIMIT:
            return self.MAX_STEPS_SMALL
        return self.MAX_STEPS_LARGE

    model_config = SettingsConfigDict(
        env_prefix="DMVI_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()
