"""
Конфигурация: переменные окружения (.env) и плоские файлы `key = value`.

Порядок приоритета: значения модели < файл конфигурации < флаги CLI.
"""

from __future__ import annotations

import os
from pathlib import Path

from dotenv import dotenv_values, load_dotenv

from .models import DomainError

load_dotenv()


# ═══════════════════════════════════════════════════════════════
# ОКРУЖЕНИЕ
# ═══════════════════════════════════════════════════════════════

ENV_OUTPUT_DIR = "STIRRING_OUTPUT_DIR"
ENV_THREADS = "STIRRING_THREADS"
ENV_LOG_LEVEL = "STIRRING_LOG_LEVEL"

DEFAULT_OUTPUT_DIR = "results"


def default_output_dir() -> str:
    return os.getenv(ENV_OUTPUT_DIR, DEFAULT_OUTPUT_DIR)


def default_threads() -> int:
    raw = os.getenv(ENV_THREADS, "1")
    try:
        return max(int(raw), 1)
    except ValueError as exc:
        raise DomainError(f"{ENV_THREADS} must be an integer, got {raw!r}") from exc


def default_log_level() -> str:
    return os.getenv(ENV_LOG_LEVEL, "INFO").upper()


# ═══════════════════════════════════════════════════════════════
# ФАЙЛЫ КОНФИГУРАЦИИ
# ═══════════════════════════════════════════════════════════════

def read_config_file(path: str | Path) -> dict[str, str]:
    """Плоский файл `key = value` (синтаксис .env); ключи приводятся к нижнему регистру."""
    path = Path(path)
    if not path.is_file():
        raise DomainError(f"config file not found: {path}")
    values = dotenv_values(path)
    return {key.strip().lower(): value for key, value in values.items() if value is not None}
