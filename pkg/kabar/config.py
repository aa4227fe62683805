from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional


class Settings(BaseSettings):
    # Reproducibility (KABAR_SEED is the fallback when --seed is absent)
    seed: Optional[int] = None

    # Logging
    log_level: str = "INFO"

    # Refinement defaults (epsilon caps seed partitions, imbalance the result)
    epsilon: float = 0.04
    imbalance: float = 0.0
    mode: str = "advanced"

    # Portfolio
    trials: int = 1
    threads: int = 1

    # Recount cached cut values after every applied move set
    debug_checks: bool = True

    model_config = SettingsConfigDict(
        env_prefix="KABAR_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()
