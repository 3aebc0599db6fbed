from enum import Enum
from pathlib import Path

from decouple import config
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Environment(str, Enum):
    """Runtime environments."""
    DEVELOPMENT = "development"
    TESTING = "testing"
    PRODUCTION = "production"


class Settings(BaseSettings):
    """Process-wide defaults, overridable through the environment or a .env file."""

    model_config = SettingsConfigDict(case_sensitive=True, env_file=".env", extra="ignore")

    # Application settings
    APP_NAME: str = config("APP_NAME", default="attnhar")
    APP_VERSION: str = config("APP_VERSION", default="1.0.0")
    ENVIRONMENT: Environment = config("ENVIRONMENT", default=Environment.DEVELOPMENT, cast=Environment)
    DEBUG: bool = config("DEBUG", default=False, cast=bool)
    LOG_LEVEL: str = config("LOG_LEVEL", default="INFO")

    # Filesystem defaults
    DATA_DIR: Path = config("DATA_DIR", default="data", cast=Path)
    OUTPUT_DIR: Path = config("OUTPUT_DIR", default="runs", cast=Path)

    # Training defaults (Adam, mean cross-entropy)
    TRAIN_EPOCHS: int = config("TRAIN_EPOCHS", default=100, cast=int)
    TRAIN_BATCH_SIZE: int = config("TRAIN_BATCH_SIZE", default=50, cast=int)
    TRAIN_LEARNING_RATE: float = config("TRAIN_LEARNING_RATE", default=0.001, cast=float)
    ADAM_BETA1: float = config("ADAM_BETA1", default=0.9, cast=float)
    ADAM_BETA2: float = config("ADAM_BETA2", default=0.999, cast=float)
    ADAM_EPSILON: float = config("ADAM_EPSILON", default=1e-8, cast=float)
    EVAL_BATCH_SIZE: int = config("EVAL_BATCH_SIZE", default=256, cast=int)
    DEFAULT_SEED: int = config("DEFAULT_SEED", default=7, cast=int)

    # Network geometry
    CONV_KERNEL_LEN: int = config("CONV_KERNEL_LEN", default=5, cast=int)
    POOL_WINDOW: int = config("POOL_WINDOW", default=2, cast=int)

    # Localization
    DENSITY_WINDOW: int = config("DENSITY_WINDOW", default=128, cast=int)
    LOCATE_LIMIT: int = config("LOCATE_LIMIT", default=100, cast=int)

    # Synthetic weakly labeled data
    SYNTH_NUM_SEQUENCES: int = config("SYNTH_NUM_SEQUENCES", default=8000, cast=int)

    # Gradient checking
    GRADCHECK_SEEDS: int = config("GRADCHECK_SEEDS", default=20, cast=int)
    GRADCHECK_TOLERANCE: float = config("GRADCHECK_TOLERANCE", default=1e-4, cast=float)
    GRADCHECK_STEP: float = config("GRADCHECK_STEP", default=1e-5, cast=float)
    GRADCHECK_MAX_ELEMENTS: int = config("GRADCHECK_MAX_ELEMENTS", default=6, cast=int)
    # Below this magnitude gradients are compared absolutely (finite-difference roundoff)
    GRADCHECK_ABS_FLOOR: float = config("GRADCHECK_ABS_FLOOR", default=1e-6, cast=float)

    # Feature flags
    CHECK_FINITE: bool = config("CHECK_FINITE", default=True, cast=bool)
    SHOW_PROGRESS: bool = config("SHOW_PROGRESS", default=True, cast=bool)

    @field_validator("ENVIRONMENT", mode="before")
    @classmethod
    def validate_environment(cls, v):
        """Fall back to development for unknown environment names."""
        if isinstance(v, str):
            try:
                return Environment(v.lower())
            except ValueError:
                return Environment.DEVELOPMENT
        return v

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of {valid_levels}")
        return v.upper()

    @field_validator("DENSITY_WINDOW")
    @classmethod
    def validate_density_window(cls, v):
        if v < 2 or v % 2:
            raise ValueError("DENSITY_WINDOW must be an even number >= 2")
        return v

    def is_testing(self) -> bool:
        """Check if running under the test suite."""
        return self.ENVIRONMENT == Environment.TESTING

    def validate_required_settings(self):
        """Validate that numeric knobs are usable."""
        errors = []

        positive_ints = {
            "TRAIN_EPOCHS": self.TRAIN_EPOCHS,
            "TRAIN_BATCH_SIZE": self.TRAIN_BATCH_SIZE,
            "EVAL_BATCH_SIZE": self.EVAL_BATCH_SIZE,
            "CONV_KERNEL_LEN": self.CONV_KERNEL_LEN,
            "POOL_WINDOW": self.POOL_WINDOW,
            "SYNTH_NUM_SEQUENCES": self.SYNTH_NUM_SEQUENCES,
            "GRADCHECK_SEEDS": self.GRADCHECK_SEEDS,
            "GRADCHECK_MAX_ELEMENTS": self.GRADCHECK_MAX_ELEMENTS,
            "LOCATE_LIMIT": self.LOCATE_LIMIT,
        }
        for name, value in positive_ints.items():
            if value < 1:
                errors.append(f"{name} must be >= 1")

        if self.TRAIN_LEARNING_RATE <= 0:
            errors.append("TRAIN_LEARNING_RATE must be > 0")
        if not 0 <= self.ADAM_BETA1 < 1 or not 0 <= self.ADAM_BETA2 < 1:
            errors.append("ADAM_BETA1 and ADAM_BETA2 must lie in [0, 1)")
        if self.GRADCHECK_STEP <= 0 or self.GRADCHECK_TOLERANCE <= 0 or self.GRADCHECK_ABS_FLOOR <= 0:
            errors.append("GRADCHECK_STEP, GRADCHECK_TOLERANCE and GRADCHECK_ABS_FLOOR must be > 0")

        if errors:
            raise ValueError("Configuration validation failed: " + "; ".join(errors))


def get_settings() -> Settings:
    """Get validated settings instance."""
    settings = Settings()
    settings.validate_required_settings()
    return settings


# Global settings instance
settings = get_settings()
