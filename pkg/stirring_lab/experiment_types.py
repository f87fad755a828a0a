"""
Типы экспериментов: подкоманды, конфигурация запуска, манифест и состояние.

Конфигурация плоская: только скаляры; манифест хранит
её целиком вместе с контрольными суммами выходных файлов.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import __version__
from .config import default_output_dir, default_threads


# ---------------------------------------------------------------------------
# Подкоманды
# ---------------------------------------------------------------------------

class Subcommand(Enum):
    SIMULATE = "simulate"
    PDE = "pde"
    HYDRO = "hydro"
    VFN = "vfn"
    EXACT = "exact"
    DUALITY = "duality"
    COUPLE = "couple"
    PAIRSTATS = "pairstats"
    ESTIMATES = "estimates"


class ExactCheck(Enum):
    """Проверки точного оракула для `exact --check`."""
    DUALITY = "duality"
    CHAPMAN = "chapman"
    V = "v"
    IDENTITY = "identity"
    INTEGRAL = "integral"
    LIGGETT = "liggett"
    ANDJEL = "andjel"
    STATIONARY = "stationary"


SUBCOMMAND_DESCRIPTIONS: dict[str, dict[str, str]] = {
    Subcommand.SIMULATE.value: {
        "name_ru": "Полная динамика",
        "role": "перемешивание + резервуары",
        "description": "Средние занятости по репликам L_ε в равноотстоящие моменты, потоки рождений и гибелей.",
    },
    Subcommand.PDE.value: {
        "name_ru": "Дискретное уравнение",
        "role": "ρ_ε(x, t)",
        "description": "Решение мезоскопического уравнения с контролем ошибки и градиент профиля.",
    },
    Subcommand.HYDRO.value: {
        "name_ru": "Гидродинамический предел",
        "role": "u_±(t) и ρ(r, t)",
        "description": "Система Вольтерры для граничных значений и уравнение теплопроводности с данными Дирихле.",
    },
    Subcommand.VFN.value: {
        "name_ru": "v-функции",
        "role": "Монте-Карло",
        "description": "Оценка усечённых корреляций с ошибкой по пакетным средним, сравнение с точным значением.",
    },
    Subcommand.EXACT.value: {
        "name_ru": "Точный оракул",
        "role": "мастер-уравнение",
        "description": "Двойственность, Колмогоров–Чепмен, v-таблицы, тождество эволюции, неравенства корреляций.",
    },
    Subcommand.DUALITY.value: {
        "name_ru": "Двойственность",
        "role": "Монте-Карло против оракула",
        "description": "E[Π η(x,t)] против двойственного перемешивания |X| частиц.",
    },
    Subcommand.COUPLE.value: {
        "name_ru": "Каплинг",
        "role": "перемешивание ↔ независимые блуждания",
        "description": "Отклонения |x_i − x⁰_i| по меткам и приоритетам, тождество для σ-первой частицы.",
    },
    Subcommand.PAIRSTATS.value: {
        "name_ru": "Статистика пар",
        "role": "τ, N, время соседства",
        "description": "Кривая выживания P[τ ≥ s], наклон, хвост числа меток.",
    },
    Subcommand.ESTIMATES.value: {
        "name_ru": "Оценки",
        "role": "a_n(t) и сглаженная норма",
        "description": "Итерированные интегралы, их оценка сверху и сумма ряда.",
    },
}


# ---------------------------------------------------------------------------
# Конфигурация и манифест
# ---------------------------------------------------------------------------

class ExperimentConfig(BaseModel):
    """Полный набор параметров одного запуска."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    subcommand: Subcommand
    n: int = Field(3, ge=1)
    k: int = Field(1, ge=1)
    j: float = Field(0.0, ge=0.0)
    t: float = Field(1.0, ge=0.0)
    seed: int = Field(0, ge=0)
    replicas: int = Field(1000, ge=2)
    threads: int = Field(default_factory=default_threads, ge=1)
    tol: float = Field(1e-8, gt=0.0)
    out: str = Field(default_factory=default_output_dir)

    x1: int = 0
    x2: int = 1
    sites: str = ""
    eta0: str = "step"
    u0: str = "const:0.5"
    h: float = Field(1e-3, gt=0.0)
    check: ExactCheck = ExactCheck.DUALITY
    b: float = Field(0.5, gt=0.0, lt=1.0)
    nmax: int = Field(30, ge=1, le=30)
    samples: int = Field(5, ge=1)
    particles: str = ""
    priority: str = ""

    @model_validator(mode="after")
    def _check_geometry(self) -> "ExperimentConfig":
        if self.k > self.n:
            raise ValueError(f"K must satisfy K ≤ N, got K={self.k}, N={self.n}")
        if 2 * self.k > 2 * self.n + 1:
            raise ValueError("reservoirs I_+ and I_- overlap")
        if self.subcommand is Subcommand.PAIRSTATS and self.x1 == self.x2:
            raise ValueError("pair statistics need x1 ≠ x2")
        return self


class ExperimentManifest(BaseModel):
    """Всё, что нужно для побитового повтора: версия, параметры, сид, суммы выходов."""

    model_config = ConfigDict(extra="forbid")

    tool_version: str = __version__
    subcommand: Subcommand
    config: ExperimentConfig
    master_seed: int
    started_at: str
    wall_clock_seconds: float = 0.0
    outputs: dict[str, str] = Field(default_factory=dict)
    log: list[str] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# Состояние запуска
# ---------------------------------------------------------------------------

@dataclass
class RunState:
    """Журнал и результаты одного запуска подкоманды."""

    config: ExperimentConfig
    logs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    summary: dict[str, float] = field(default_factory=dict)
    manifest_path: Optional[str] = None

    def add_log(self, message: str) -> None:
        """Добавить запись в лог (макс. 500)."""
        self.logs.append(message)
        if len(self.logs) > 500:
            self.logs = self.logs[-500:]
