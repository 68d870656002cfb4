"""
Application configuration using environment variables.
"""
from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables."""

    # Run registry
    DATABASE_URL: str = "sqlite:///./podtopics.db"

    # Content-addressed stage cache (similarity matrices, co-occurrence indexes)
    CACHE_DIR: str = ".podtopics-cache"

    # Application
    APP_NAME: str = "podtopics"
    LOG_LEVEL: str = "INFO"
    DEBUG: bool = False
    WORKERS: int = 1

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True)


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
