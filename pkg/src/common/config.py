import os
from functools import lru_cache
from typing import Literal

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file='.env',
        case_sensitive=True,
        extra='ignore',
    )
    PROJECT_NAME: str = os.getenv('PROJECT_NAME', 'MoHETS Forecaster')
    PROJECT_VERSION: str = os.getenv('PROJECT_VERSION', '0.1.0')

    MOHETS_ENVIRONMENT: Literal['development', 'production'] = 'development'
    MOHETS_LOG_LEVEL: str = 'INFO'

    # Seed default for every command that takes --seed
    MOHETS_SEED: int = 2021
    MOHETS_THREADS: int = 1

    MOHETS_OUT_DIR: str = 'runs'
    MOHETS_DATA_DIR: str = 'data'

    # Phases slower than this are reported as warnings
    SLOW_PHASE_THRESHOLD_S: float = 600.0

    @property
    def is_production(self) -> bool:
        return self.MOHETS_ENVIRONMENT == 'production'


settings = Settings()


@lru_cache()
def get_settings() -> Settings:
    """
    Cached settings instance to avoid re-reading the environment.
    """
    return Settings()
