#!/usr/bin/env python3
"""
Stirring Lab — моделирование перемешивания с резервуарами на [−N, N].

Использование:
    python -m stirring_lab exact --check duality --n 2 --t 0.5
    python -m stirring_lab pairstats --n 1 --x1 0 --x2 1 --t 1 --replicas 100000 --seed 7
    python -m stirring_lab hydro --u0 const:0.5 --j 1 --k 1 --t 1 --h 1e-3
    python -m stirring_lab simulate --config run.env --threads 4
    python -m stirring_lab pairstats --from-manifest results/pairstats_manifest.json

Коды выхода: 0 — успех, 1 — ошибка параметров или вычисления, 2 — ошибка вызова.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Optional, Sequence

from pydantic import ValidationError

from .config import default_log_level, read_config_file
from .console import setup_logging
from .experiment_types import SUBCOMMAND_DESCRIPTIONS, ExactCheck, ExperimentConfig, Subcommand
from .models import StirringError
from .orchestrator import run_experiment
from .results import read_manifest

logger = logging.getLogger(__name__)


def _common_parser() -> argparse.ArgumentParser:
    """Флаги, общие для всех подкоманд; отсутствующие не попадают в Namespace."""
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--n", type=int, help="Полуширина решётки N (Λ_N = [−N, N])")
    common.add_argument("--k", type=int, help="Ширина резервуаров K")
    common.add_argument("--j", type=float, help="Интенсивность резервуаров j ≥ 0")
    common.add_argument("--t", type=float, help="Макроскопическое время")
    common.add_argument("--seed", type=int, help="Главный сид")
    common.add_argument("--replicas", type=int, help="Число реплик Монте-Карло")
    common.add_argument("--threads", type=int, help="Число потоков (результат от него не зависит)")
    common.add_argument("--tol", type=float, help="Допуск интегратора ρ_ε")
    common.add_argument("--out", type=str, help="Каталог результатов")

    common.add_argument("--x1", type=int, help="Первый сайт пары")
    common.add_argument("--x2", type=int, help="Второй сайт пары")
    common.add_argument("--sites", type=str, help="Множество X, например '-1,1'")
    common.add_argument("--eta0", type=str, help="Начальная конфигурация: 0/1-строка или step|alternating|empty|full")
    common.add_argument("--u0", type=str, help="Макропрофиль: const:c, linear:a,b, step:a,b, sine:c,a")
    common.add_argument("--h", type=float, help="Шаг сетки для системы Вольтерры")
    common.add_argument("--check", type=str, choices=[c.value for c in ExactCheck], help="Проверка точного оракула")
    common.add_argument("--b", type=float, help="Показатель сглаженной нормы, 0 < b < 1")
    common.add_argument("--nmax", type=int, help="Максимальный порядок a_n")
    common.add_argument("--samples", type=int, help="Число моментов наблюдения")
    common.add_argument("--particles", type=str, help="Стартовые положения меченых частиц")
    common.add_argument("--priority", type=str, help="Ранги σ (0 — высший приоритет)")

    common.add_argument("--config", dest="config_file", type=str, help="Файл key = value")
    common.add_argument("--from-manifest", dest="manifest_file", type=str, help="Повтор запуска по манифесту")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Подробный лог (DEBUG)")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Только предупреждения")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stirring_lab",
        description="Stirring Lab — перемешивание с резервуарами: симуляция, уравнения, точные оракулы",
    )
    common = _common_parser()
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for subcommand in Subcommand:
        meta = SUBCOMMAND_DESCRIPTIONS[subcommand.value]
        sub.add_parser(subcommand.value, parents=[common], help=meta["name_ru"], description=meta["description"])
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Значения модели < манифест или файл конфигурации < флаги CLI."""
    flags = vars(args).copy()
    subcommand = flags.pop("subcommand")
    manifest_file = flags.pop("manifest_file", None)
    config_file = flags.pop("config_file", None)
    flags.pop("verbose", None)
    flags.pop("quiet", None)

    values: dict[str, Any] = {}
    if manifest_file:
        manifest = read_manifest(manifest_file)
        if manifest.subcommand.value != subcommand:
            raise StirringError(
                f"manifest was written by '{manifest.subcommand.value}', not '{subcommand}'"
            )
        values.update(manifest.config.model_dump(mode="json", exclude={"subcommand"}))
    if config_file:
        values.update(read_config_file(config_file))
    values.update(flags)
    values["subcommand"] = subcommand
    return ExperimentConfig.model_validate(values)


def _log_level(args: argparse.Namespace) -> str:
    if getattr(args, "verbose", False):
        return "DEBUG"
    if getattr(args, "quiet", False):
        return "WARNING"
    return default_log_level()


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """Точка входа CLI; возвращает код выхода."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    setup_logging(_log_level(args))
    try:
        config = resolve_config(args)
        run_experiment(config)
    except ValidationError as exc:
        logger.error("invalid parameters:\n%s", exc)
        return 1
    except StirringError as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(cli())
