"""
Configuration Settings
Loads from .env file and environment variables
"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings from environment variables

    Workflow hyperparameters (model sizes, learning rate, ...) are NOT here;
    they live in the per-command config models under fcmf.schemas.config.
    """

    # Output root for every artifact directory (overridden by --out)
    FCMF_OUT: str = "runs"

    # Worker cap for feature loading (overridden by --threads)
    FCMF_THREADS: int = 1

    # Opt-in for acceptance-scale tests
    FCMF_RUN_SLOW: bool = False

    # Logging Configuration
    LOG_LEVEL: str = "INFO"  # DEBUG, INFO, WARNING, ERROR, CRITICAL
    LOG_JSON_OUTPUT: bool = False  # One JSON object per log line

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")


# Global settings instance
settings = Settings()
