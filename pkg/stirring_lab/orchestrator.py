"""
Оркестратор подкоманд: разбор параметров, запуск модуля, таблицы, манифест.

Каждая подкоманда возвращает список таблиц и текстовый отчёт; таблицы
пишутся в каталог `out` рядом с манифестом `<подкоманда>_manifest.json`.
"""

from __future__ import annotations

import logging
import math
import time
from datetime import datetime, timezone
from itertools import combinations
from pathlib import Path
from typing import Callable

import numpy as np

from .estimates import (
    an_bound,
    an_closed_form,
    an_product_integration,
    an_series_bound,
    format_an_report,
    iterated_kernel_an,
    smoothed_norm,
)
from .exact import (
    MAX_GENERATOR_N,
    MAX_V_N,
    Derivative,
    andjel_gap,
    build_generator,
    check_evolution_identity,
    duality_exact,
    evolve_distribution,
    exact_v,
    integral_form_residual,
    liggett_gap,
    site_marginals,
    stationary_sector,
    v_table,
)
from .experiment_types import (
    SUBCOMMAND_DESCRIPTIONS,
    ExactCheck,
    ExperimentConfig,
    ExperimentManifest,
    RunState,
    Subcommand,
)
from .hydro import format_trace_summary, macro_current, micro_macro_gap, parse_profile, solve_boundary_traces, solve_macro
from .lattice import in_reservoir
from .models import DomainError, LabeledState, LatticeParams, ParticleConfig, RhoField, Side, parse_config, parse_sites
from .pde import boundary_current, evolve_rho, evolve_rho_path, gradient_profile
from .results import Table, save_tables, write_manifest
from .sim import (
    deviation_frequency,
    duality_check,
    mark_tail_frequency,
    pair_stats,
    sample_coupling,
    sample_full_process,
    survival_curve,
    survival_slope,
)
from .vfn import estimate_v

logger = logging.getLogger(__name__)

Report = list[str]
Runner = Callable[[ExperimentConfig, RunState], tuple[list[Table], Report]]


def _print_subcommand_header(subcommand: Subcommand) -> None:
    meta = SUBCOMMAND_DESCRIPTIONS[subcommand.value]
    print(f"\n{'━' * 70}")
    print(f"  [{subcommand.value.upper()}] {meta['name_ru']}")
    print(f"  Роль: {meta['role']}")
    print(f"  {meta['description'][:100]}")
    print(f"{'━' * 70}")


def _print_run_summary(state: RunState) -> None:
    print(f"\n{'=' * 60}")
    print("  ИТОГ ЗАПУСКА")
    print(f"{'=' * 60}")
    for key, value in state.summary.items():
        print(f"  {key:<28} {value:.6g}")
    for name in state.outputs:
        print(f"  → {name}")
    if state.manifest_path:
        print(f"  Манифест: {state.manifest_path}")


def _format_block(title: str, lines: Report) -> str:
    return "\n".join(["=" * 60, f"  {title}", "=" * 60, "", *lines])


# ---------------------------------------------------------------------------
# Общие помощники
# ---------------------------------------------------------------------------

def _params(config: ExperimentConfig) -> LatticeParams:
    return LatticeParams(n=config.n, k=config.k, j=config.j)


def _sample_times(config: ExperimentConfig) -> np.ndarray:
    if config.t == 0:
        return np.array([0.0])
    return np.linspace(0.0, config.t, config.samples + 1)[1:]


def _sites_or_pair(config: ExperimentConfig) -> tuple[int, ...]:
    return parse_sites(config.sites) or (config.x1, config.x2)


def _set_label(sites) -> str:
    return " ".join(str(int(x)) for x in sites) or "∅"


def _interior_sets(params: LatticeParams, max_order: int) -> list[tuple[int, ...]]:
    interior = [int(x) for x in params.sites()
                if not in_reservoir(params, x, Side.PLUS) and not in_reservoir(params, x, Side.MINUS)]
    return [s for order in range(1, max_order + 1) for s in combinations(interior, order)]


def _random_configs(params: LatticeParams, count: int, seed: int) -> list[ParticleConfig]:
    rng = np.random.default_rng(seed)
    return [ParticleConfig(params, rng.integers(0, 2, params.size).astype(np.int8)) for _ in range(count)]


# ---------------------------------------------------------------------------
# Подкоманды
# ---------------------------------------------------------------------------

def _run_simulate(config: ExperimentConfig, state: RunState) -> tuple[list[Table], Report]:
    params = _params(config)
    eta0 = parse_config(params, config.eta0)
    times = _sample_times(config)
    sample = sample_full_process(eta0, times, config.replicas, config.seed, config.threads)
    rhos = evolve_rho_path(RhoField.from_config(eta0), times, tol=config.tol)
    state.add_log(f"[SIM] {sample.replicas} реплик, {len(times)} моментов")

    table = Table("simulate", ("time", "x", "mean", "std_error", "rho"))
    worst = 0.0
    for k, (s, rho) in enumerate(zip(times, rhos)):
        means, errors = sample.site_means(k), sample.site_std_errors(k)
        for x, m, se, r in zip(params.sites(), means, errors, rho.values):
            table.add(float(s), int(x), float(m), float(se), float(r))
            if se > 0:
                worst = max(worst, abs(m - r) / se)

    state.summary["max |mean − ρ_ε|/σ"] = worst
    state.summary["birth rate"] = sample.tally.birth_rate(config.t)
    state.summary["death rate"] = sample.tally.death_rate(config.t)
    plus, minus = boundary_current(rhos[-1])
    report = [
        f"  N={params.n}  K={params.k}  j={params.j:g}  η₀={eta0.to_string()}",
        f"  Рождения в единицу времени:  {state.summary['birth rate']:.6g}",
        f"  Гибели в единицу времени:    {state.summary['death rate']:.6g}",
        f"  Потоки ρ_ε при t={config.t:g}:     +{plus:.6g} / −{minus:.6g}",
    ]
    return [table], report


def _run_pde(config: ExperimentConfig, state: RunState) -> tuple[list[Table], Report]:
    params = _params(config)
    eta0 = parse_config(params, config.eta0)
    rhos = evolve_rho_path(RhoField.from_config(eta0), _sample_times(config), tol=config.tol)

    table = Table("pde", ("time", "x", "rho"))
    for rho in rhos:
        for x, value in zip(params.sites(), rho.values):
            table.add(rho.time, int(x), float(value))
    final = rhos[-1]
    plus, minus = boundary_current(final)
    state.summary["max |∇ρ_ε|"] = gradient_profile(final)
    state.summary["birth current"] = plus
    state.summary["death current"] = minus
    state.add_log(f"[PDE] {len(rhos)} профилей, tol={config.tol:g}")
    return [table], [f"  Σρ_ε(t={config.t:g}) = {final.values.sum():.10g}"]


def _run_hydro(config: ExperimentConfig, state: RunState) -> tuple[list[Table], Report]:
    u0 = parse_profile(config.u0)
    trace = solve_boundary_traces(u0, config.j, config.k, config.t, config.h)
    trace_table = Table("hydro_trace", ("time", "u_plus", "u_minus"))
    for s, a, b in zip(trace.grid, trace.u_plus, trace.u_minus):
        trace_table.add(float(s), float(a), float(b))

    macro = solve_macro(u0, trace, config.t)
    macro_table = Table("hydro_macro", ("r", "rho"))
    for r, value in zip(macro.grid, macro.values):
        macro_table.add(float(r), float(value))

    params = _params(config)
    micro0 = RhoField(params, 0.0, np.asarray(u0(params.epsilon * params.sites()), dtype=float))
    gap = micro_macro_gap(evolve_rho(micro0, config.t, tol=config.tol), macro)
    inflow, outflow = macro_current(macro)
    state.summary["Picard residual"] = trace.residual
    state.summary[f"micro–macro gap (N={params.n})"] = gap
    state.summary["flux at r=+1"] = inflow
    state.summary["flux at r=−1"] = outflow
    state.add_log(f"[HYDRO] h={config.h:g}, {len(trace.grid)} узлов, Пикар {trace.residual:.1e}")
    return [trace_table, macro_table], format_trace_summary(trace).splitlines()[4:]


def _run_vfn(config: ExperimentConfig, state: RunState) -> tuple[list[Table], Report]:
    params = _params(config)
    eta0 = parse_config(params, config.eta0)
    sites = _sites_or_pair(config)
    est = estimate_v(sites, config.t, eta0, config.replicas, config.seed, config.threads, tol=config.tol)
    exact = exact_v(params, est.sites, config.t, eta0) if params.n <= MAX_V_N else math.nan
    z = (est.estimate - exact) / est.std_error if est.std_error > 0 and not math.isnan(exact) else math.nan

    table = Table("vfn", ("sites", "t", "estimate", "std_error", "replicas", "exact", "z"))
    table.add(_set_label(est.sites), est.time, est.estimate, est.std_error, est.replicas, exact, z)
    state.summary["v estimate"] = est.estimate
    state.summary["std error"] = est.std_error
    if not math.isnan(z):
        state.summary["z vs exact"] = z
    state.add_log(f"[VFN] X={_set_label(est.sites)}, {est.replicas} реплик")
    return [table], [f"  v({_set_label(est.sites)}, {config.t:g}) = {est.estimate:.4e} ± {est.std_error:.1e}"]


# ---------------------------------------------------------------------------
# Точный оракул
# ---------------------------------------------------------------------------

def _exact_duality(config, params, eta0) -> tuple[Table, float]:
    table = Table("exact_duality", ("eta0", "X", "lhs", "rhs", "abs_diff"))
    worst = 0.0
    sets = [()] + [s for order in (1, 2) for s in combinations(params.sites().tolist(), order)]
    for config0 in [eta0, *_random_configs(params, config.samples - 1, config.seed)]:
        for sites in sets:
            lhs, rhs = duality_exact(params, sites, config0, config.t)
            worst = max(worst, abs(lhs - rhs))
            table.add(config0.to_string(), _set_label(sites), lhs, rhs, abs(lhs - rhs))
    return table, worst


def _exact_chapman(config, params, eta0) -> tuple[Table, float]:
    generator = build_generator(params)
    p0 = generator.space.point_mass(eta0)
    table = Table("exact_chapman", ("t", "chapman_residual", "marginal_vs_rho"))
    worst = 0.0
    for s in _sample_times(config):
        direct = evolve_distribution(generator, p0, s)
        halves = evolve_distribution(generator, evolve_distribution(generator, p0, 0.5 * s), 0.5 * s)
        chapman = float(np.max(np.abs(direct - halves)))
        rho = evolve_rho(RhoField.from_config(eta0), s, tol=1e-10).values
        marginal = float(np.max(np.abs(site_marginals(params, eta0, s, generator) - rho)))
        worst = max(worst, chapman)
        table.add(float(s), chapman, marginal)
    return table, worst


def _exact_v(config, params, eta0) -> tuple[Table, float]:
    vtab = v_table(params, eta0, config.t, max_order=2)
    table = Table("exact_v", ("X", "v"))
    for key, value in vtab.values.items():
        table.add(_set_label(key), value)
    return table, max(abs(v) for v in vtab.values.values())


def _exact_identity(config, params, eta0) -> tuple[Table, float]:
    sets = [parse_sites(config.sites)] if config.sites else _interior_sets(params, 2)
    table = Table("exact_identity", ("X", "residual_richardson", "residual_analytic"))
    worst = 0.0
    for sites in sets:
        fd = check_evolution_identity(params, sites, config.t, eta0)
        analytic = check_evolution_identity(params, sites, config.t, eta0, derivative=Derivative.ANALYTIC)
        worst = max(worst, fd)
        table.add(_set_label(sites), fd, analytic)
    return table, worst


def _exact_integral(config, params, eta0) -> tuple[Table, float]:
    sets = [parse_sites(config.sites)] if config.sites else _interior_sets(params, 1)
    table = Table("exact_integral", ("X", "residual"))
    worst = 0.0
    for sites in sets:
        residual = integral_form_residual(params, sites, config.t, eta0)
        worst = max(worst, residual)
        table.add(_set_label(sites), residual)
    return table, worst


def _exact_liggett(config, params, eta0) -> tuple[Table, float]:
    table = Table("exact_liggett", ("t", "gap"))
    lowest = math.inf
    for s in _sample_times(config):
        gap = liggett_gap(params, config.x1, config.x2, float(s))
        lowest = min(lowest, gap)
        table.add(float(s), gap)
    return table, lowest


def _exact_andjel(config, params, eta0) -> tuple[Table, float]:
    sites = _sites_or_pair(config)
    table = Table("exact_andjel", ("W", "Z", "gap"))
    lowest = math.inf
    for size in range(len(sites) + 1):
        for w in combinations(sites, size):
            z = tuple(x for x in sites if x not in w)
            gap = andjel_gap(params, sites, w, z, config.t)
            lowest = min(lowest, gap)
            table.add(_set_label(w), _set_label(z), gap)
    return table, lowest


def _exact_stationary(config, params, eta0) -> tuple[Table, float]:
    sector, vector = stationary_sector(params, eta0.count)
    space = build_generator(params.with_j(0.0)).space
    table = Table("exact_stationary", ("config", "probability"))
    for index, prob in zip(sector, vector):
        table.add(space.config(int(index)).to_string(), float(prob))
    return table, float(np.max(np.abs(vector - 1.0 / len(vector))))


EXACT_CHECKS: dict[ExactCheck, tuple[Callable, str]] = {
    ExactCheck.DUALITY: (_exact_duality, "max |lhs − rhs|"),
    ExactCheck.CHAPMAN: (_exact_chapman, "max Chapman–Kolmogorov residual"),
    ExactCheck.V: (_exact_v, "max |v|"),
    ExactCheck.IDENTITY: (_exact_identity, "max identity residual"),
    ExactCheck.INTEGRAL: (_exact_integral, "max integral-form residual"),
    ExactCheck.LIGGETT: (_exact_liggett, "min Liggett gap"),
    ExactCheck.ANDJEL: (_exact_andjel, "min Andjel gap"),
    ExactCheck.STATIONARY: (_exact_stationary, "max |π − uniform|"),
}


def _run_exact(config: ExperimentConfig, state: RunState) -> tuple[list[Table], Report]:
    params = _params(config)
    if params.n > MAX_GENERATOR_N:
        raise DomainError(f"exact oracle limited to N ≤ {MAX_GENERATOR_N}, got N={params.n}")
    eta0 = parse_config(params, config.eta0)
    check, label = EXACT_CHECKS[config.check]
    table, value = check(config, params, eta0)
    state.summary[label] = value
    state.add_log(f"[EXACT] {config.check.value}: {label} = {value:.3e}")
    return [table], [f"  Проверка {config.check.value}: {label} = {value:.3e}"]


# ---------------------------------------------------------------------------
# Монте-Карло меченых частиц
# ---------------------------------------------------------------------------

def _run_duality(config: ExperimentConfig, state: RunState) -> tuple[list[Table], Report]:
    params = _params(config)
    eta0 = parse_config(params, config.eta0)
    sites = _sites_or_pair(config)
    result = duality_check(sites, eta0, config.t, config.replicas, config.seed, config.threads)
    exact = duality_exact(params, sites, eta0, config.t)[0] if params.n <= MAX_GENERATOR_N else math.nan

    table = Table("duality", ("X", "lhs", "lhs_se", "rhs", "rhs_se", "z", "exact"))
    table.add(_set_label(sites), result.lhs, result.lhs_se, result.rhs, result.rhs_se, result.z, exact)
    state.summary["lhs"] = result.lhs
    state.summary["rhs"] = result.rhs
    state.summary["z"] = result.z
    state.add_log(f"[DUALITY] X={_set_label(sites)}, z={result.z:.2f}")
    return [table], [f"  E[Π η(X,t)] = {result.lhs:.5f} ± {result.lhs_se:.1e}",
                     f"  E[Π η₀(X(t))] = {result.rhs:.5f} ± {result.rhs_se:.1e}"]


def _run_couple(config: ExperimentConfig, state: RunState) -> tuple[list[Table], Report]:
    params = _params(config)
    start = parse_sites(config.particles) or (config.x1, config.x2)
    priority = parse_sites(config.priority) or tuple(range(len(start)))
    sample = sample_coupling(params, LabeledState(start), priority, config.t,
                             config.replicas, config.seed, config.threads)

    table = Table("couple", ("label", "start", "priority", "mean_abs_gap", "max_abs_gap", "deviation_freq"))
    for label, x in enumerate(start):
        gap = np.abs(sample.stirring[:, label] - sample.independent[:, label])
        table.add(label, int(x), sample.priority[label], float(gap.mean()), int(gap.max()),
                  deviation_frequency(sample, label=label))

    identity = float(sample.top_identity.mean())
    state.summary["top identity fraction"] = identity
    state.summary["deviation freq (lowest)"] = deviation_frequency(sample)
    state.add_log(f"[COUPLE] σ={sample.priority}, тождество {identity:.4f}")
    if identity < 1.0:
        logger.warning("top-priority label left its independent walker in %.3g%% of replicas",
                       100.0 * (1.0 - identity))
    return [table], [f"  ε⁻²t = {params.n ** 2 * config.t:g}, σ = {sample.priority}"]


def _run_pairstats(config: ExperimentConfig, state: RunState) -> tuple[list[Table], Report]:
    params = _params(config)
    result = pair_stats(params, config.x1, config.x2, config.t, config.replicas, config.seed, config.threads)
    if config.t > 0:
        floor = min(1.0 / params.n ** 2, config.t)
        grid = np.unique(np.concatenate([np.linspace(0.0, config.t, 51), np.geomspace(floor, config.t, 50)]))
    else:
        grid = np.array([0.0])
    survival = survival_curve(result, grid)

    table = Table("pairstats", ("s", "lambda", "survival"))
    for s, p in zip(grid, survival):
        table.add(float(s), float(params.n ** 2 * s), float(p))

    state.summary["mark tail freq (ζ=0.1)"] = mark_tail_frequency(result)
    state.summary["mean adjacency time"] = float(result.occupation.mean())
    state.summary["mean marks"] = float(result.n_marks.mean())
    state.add_log(f"[PAIRS] ({config.x1}, {config.x2}), {result.replicas} реплик")
    if params.n ** 2 * config.t >= 1e4:
        try:
            state.summary["survival slope"] = survival_slope(result)
        except DomainError as exc:
            logger.warning("survival slope skipped: %s", exc)
            state.add_log(f"[PAIRS] наклон пропущен: {exc}")
    return [table], [f"  Пара ({config.x1}, {config.x2}), реплик {result.replicas}, "
                     f"цензурировано {int(np.isinf(result.tau).sum())}"]


def _run_estimates(config: ExperimentConfig, state: RunState) -> tuple[list[Table], Report]:
    table = Table("estimates", ("n", "a_n", "a_n_grid", "closed_form", "bound", "rel_err", "grid_rel_err"))
    for n in range(1, config.nmax + 1):
        a = iterated_kernel_an(n, config.t)
        grid = an_product_integration(n, config.t)
        closed = an_closed_form(n, config.t)
        rel = abs(a - closed) / closed if closed > 0 else 0.0
        grid_rel = abs(grid - closed) / closed if closed > 0 else 0.0
        table.add(n, a, grid, closed, an_bound(n, config.t), rel, grid_rel)

    params = _params(config)
    alternating = np.where(params.sites() % 2 == 0, 1.0, -1.0)
    state.summary["|||(−1)^x|||"] = smoothed_norm(params, alternating, config.b)
    state.add_log(f"[ESTIMATES] a_1..a_{config.nmax} при t={config.t:g}")
    report = []
    if config.t <= 10.0:
        series = an_series_bound(config.t, config.nmax)
        state.summary["series constant c"] = series.fitted_c
        report = format_an_report(series).splitlines()[4:]
    return [table], report


RUNNERS: dict[Subcommand, Runner] = {
    Subcommand.SIMULATE: _run_simulate,
    Subcommand.PDE: _run_pde,
    Subcommand.HYDRO: _run_hydro,
    Subcommand.VFN: _run_vfn,
    Subcommand.EXACT: _run_exact,
    Subcommand.DUALITY: _run_duality,
    Subcommand.COUPLE: _run_couple,
    Subcommand.PAIRSTATS: _run_pairstats,
    Subcommand.ESTIMATES: _run_estimates,
}


# ---------------------------------------------------------------------------
# Запуск
# ---------------------------------------------------------------------------

def manifest_name(subcommand: Subcommand) -> str:
    return f"{subcommand.value}_manifest.json"


def run_experiment(config: ExperimentConfig) -> RunState:
    """Запускает подкоманду, пишет таблицы и манифест, печатает отчёт."""
    state = RunState(config=config)
    _print_subcommand_header(config.subcommand)
    started = datetime.now(timezone.utc)
    clock = time.perf_counter()

    tables, report = RUNNERS[config.subcommand](config, state)

    out = Path(config.out)
    name = manifest_name(config.subcommand)
    checksums = save_tables(tables, out, name)
    state.add_log(f"[CLI] {len(tables)} таблиц → {out}")
    manifest = ExperimentManifest(
        subcommand=config.subcommand,
        config=config,
        master_seed=config.seed,
        started_at=started.isoformat(timespec="seconds"),
        wall_clock_seconds=round(time.perf_counter() - clock, 3),
        outputs=checksums,
        log=list(state.logs),
    )
    state.manifest_path = str(write_manifest(manifest, out / name))
    state.outputs = [str(out / filename) for filename in checksums]

    if report:
        print(_format_block(SUBCOMMAND_DESCRIPTIONS[config.subcommand.value]["name_ru"].upper(), report))
    _print_run_summary(state)
    return state
