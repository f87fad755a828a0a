"""
Сохранение результатов: CSV-таблицы со ссылкой на манифест и JSON-манифест.

Числа пишутся как `%.17g` (не зависит от локали); первая строка таблицы:
`# manifest: <файл>`, вторая: заголовок колонок.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .experiment_types import ExperimentManifest
from .models import DomainError

logger = logging.getLogger(__name__)


@dataclass
class Table:
    """Одна выходная таблица; name: имя файла без расширения."""

    name: str
    columns: tuple[str, ...]
    rows: list[tuple[Any, ...]] = field(default_factory=list)

    def add(self, *row: Any) -> None:
        if len(row) != len(self.columns):
            raise DomainError(f"row of {len(row)} values for {len(self.columns)} columns in {self.name}")
        self.rows.append(row)

    @property
    def filename(self) -> str:
        return f"{self.name}.csv"


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_table(table: Table, directory: str | Path, manifest_name: str) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / table.filename
    with path.open("w", newline="", encoding="utf-8") as handle:
        handle.write(f"# manifest: {manifest_name}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([format_value(v) for v in row])
    logger.debug("wrote %s (%d rows)", path, len(table.rows))
    return path


def read_table(path: str | Path) -> tuple[str, list[str], list[list[str]]]:
    """(имя манифеста, заголовок, строки); строки остаются текстом."""
    with Path(path).open(encoding="utf-8") as handle:
        first = handle.readline().strip()
        if not first.startswith("# manifest:"):
            raise DomainError(f"{path}: missing manifest reference line")
        reader = csv.reader(handle)
        header = next(reader)
        rows = list(reader)
    return first.split(":", 1)[1].strip(), header, rows


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Манифест
# ---------------------------------------------------------------------------

def write_manifest(manifest: ExperimentManifest, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def read_manifest(path: str | Path) -> ExperimentManifest:
    path = Path(path)
    if not path.is_file():
        raise DomainError(f"manifest not found: {path}")
    return ExperimentManifest.model_validate_json(path.read_text(encoding="utf-8"))


def verify_outputs(manifest: ExperimentManifest, directory: str | Path) -> dict[str, bool]:
    """Совпадают ли контрольные суммы файлов в directory с записанными в манифесте."""
    directory = Path(directory)
    return {
        name: (directory / name).is_file() and sha256_file(directory / name) == digest
        for name, digest in manifest.outputs.items()
    }


def save_tables(tables: Sequence[Table], directory: str | Path, manifest_name: str) -> dict[str, str]:
    """Пишет таблицы и возвращает {имя файла: sha256}."""
    checksums = {}
    for table in tables:
        path = write_table(table, directory, manifest_name)
        checksums[path.name] = sha256_file(path)
    return checksums
