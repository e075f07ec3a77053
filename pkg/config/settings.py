import os
from functools import lru_cache

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

load_dotenv()


class Settings(BaseModel):
    log_level: str = "INFO"
    log_json: bool = False
    threads: int = Field(1, ge=1)
    out_dir: str = "results"
    results_db: str | None = None

    @field_validator("log_level")
    @classmethod
    def known_level(cls, value: str) -> str:
        level = value.strip().upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown log level {value!r}")
        return level

    @classmethod
    def from_env(cls) -> "Settings":
        values = {
            "log_level": os.environ.get("SVFT_LOG_LEVEL"),
            "log_json": os.environ.get("SVFT_LOG_JSON"),
            "threads": os.environ.get("SVFT_THREADS"),
            "out_dir": os.environ.get("SVFT_OUT_DIR"),
            "results_db": os.environ.get("SVFT_RESULTS_DB") or None,
        }
        return cls(**{k: v for k, v in values.items() if v is not None})


@lru_cache
def get_settings() -> Settings:
    return Settings.from_env()
