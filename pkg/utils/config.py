# utils/config.py
import os
from dataclasses import dataclass

from dotenv import load_dotenv

load_dotenv()


@dataclass(frozen=True)
class Settings:
    max_entries: int
    tolerance: float
    log_level: str
    progress: bool
    workers: int


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if not raw:
        return default
    try:
        return int(float(raw))
    except ValueError:
        print(f"CONFIG: Ignoring invalid {name}={raw!r}, using {default}")
        return default


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if not raw:
        return default
    try:
        return float(raw)
    except ValueError:
        print(f"CONFIG: Ignoring invalid {name}={raw!r}, using {default}")
        return default


def load_settings() -> Settings:
    return Settings(
        max_entries=_env_int("TOPICSCOPE_MAX_ENTRIES", 100_000_000),
        tolerance=_env_float("TOPICSCOPE_TOLERANCE", 1e-9),
        log_level=os.getenv("TOPICSCOPE_LOG_LEVEL", "INFO").upper(),
        progress=os.getenv("TOPICSCOPE_PROGRESS", "1") not in ("0", "false", "False", "no"),
        workers=max(1, _env_int("TOPICSCOPE_WORKERS", 1)),
    )


settings = load_settings()
