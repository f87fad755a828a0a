"""
Консольный вывод: цвета, временные метки, разделители.

Каждый модуль пишет в `logging.getLogger(__name__)`; здесь настраивается
единственный обработчик, который раскрашивает тег модуля.
"""

from __future__ import annotations

import logging
import sys
from datetime import datetime


class C:
    CYAN    = "\033[96m"
    GREEN   = "\033[92m"
    YELLOW  = "\033[93m"
    RED     = "\033[91m"
    MAGENTA = "\033[95m"
    BLUE    = "\033[94m"
    WHITE   = "\033[97m"
    BOLD    = "\033[1m"
    DIM     = "\033[2m"
    RESET   = "\033[0m"


MODULE_COLORS = {
    "LATTICE":   C.WHITE,
    "KERNELS":   C.CYAN,
    "PDE":       C.BLUE,
    "HYDRO":     C.MAGENTA,
    "SIM":       C.GREEN,
    "EXACT":     C.YELLOW,
    "VFN":       C.GREEN,
    "ESTIMATES": C.CYAN,
    "CLI":       C.DIM,
    "RESULTS":   C.DIM,
}

ROOT_LOGGER = "stirring_lab"


def _tag(name: str) -> str:
    """`stirring_lab.hydro` → `HYDRO`."""
    leaf = name.rsplit(".", 1)[-1]
    if leaf in ("main", "orchestrator", ROOT_LOGGER):
        return "CLI"
    return leaf.upper()


class ColorFormatter(logging.Formatter):
    """Формат `HH:MM:SS  [TAG]  message` с цветом по модулю и уровню."""

    def __init__(self, color: bool = True):
        super().__init__()
        self.color = color

    def format(self, record: logging.LogRecord) -> str:
        ts = datetime.fromtimestamp(record.created).strftime("%H:%M:%S")
        tag = _tag(record.name)
        message = record.getMessage()
        if record.exc_info:
            message = f"{message}\n{self.formatException(record.exc_info)}"
        if not self.color:
            return f"  {ts}  [{tag}]  {record.levelname.lower()}: {message}" \
                if record.levelno >= logging.WARNING else f"  {ts}  [{tag}]  {message}"

        if record.levelno >= logging.ERROR:
            color = C.RED
        elif record.levelno >= logging.WARNING:
            color = C.YELLOW
        else:
            color = MODULE_COLORS.get(tag, C.RESET)
        return f"  {C.DIM}{ts}{C.RESET}  {color}{C.BOLD}[{tag}]{C.RESET}  {message}"


def setup_logging(level: str | int = "INFO", color: bool | None = None) -> logging.Logger:
    """Ставит единственный обработчик stderr на корневой логгер пакета."""
    if color is None:
        color = sys.stderr.isatty()
    logger = logging.getLogger(ROOT_LOGGER)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(ColorFormatter(color=color))
    logger.addHandler(handler)
    logger.setLevel(level.upper() if isinstance(level, str) else level)
    logger.propagate = False
    return logger

