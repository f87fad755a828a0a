import numpy as np
import pytest
from scipy import stats

from stirring_lab.exact import site_marginals
from stirring_lab.kernels import reflected_kernel_matrix
from stirring_lab.models import DomainError, LabeledState, LatticeParams, MarkAttribute, ParticleConfig
from stirring_lab.sim import (
    antisymmetry_check,
    deviation_frequency,
    duality_check,
    labeled_occupation,
    mark_tail_frequency,
    pair_stats,
    run_batches,
    run_coupling,
    run_full_process,
    run_marks_stirring,
    sample_coupling,
    sample_full_process,
    sample_labeled,
    sign_difference,
    survival_curve,
    survival_slope,
)


def _chi_square_pvalue(positions, expected_probs):
    """Хи-квадрат с объединением клеток, где ожидается меньше 5 наблюдений."""
    observed = np.bincount(positions, minlength=len(expected_probs)).astype(float)
    expected = expected_probs * len(positions)
    keep = expected >= 5.0
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    if exp[-1] < 5.0:
        obs[-2] += obs[-1]
        exp[-2] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    exp *= obs.sum() / exp.sum()
    return stats.chisquare(obs, exp).pvalue


# ---------------------------------------------------------------------------
# Пакеты и воспроизводимость
# ---------------------------------------------------------------------------

def test_run_batches_splits_replicas():
    sizes = run_batches(lambda b, size: (b, size), 600, threads=1, batch_size=256)
    assert sizes == [(0, 256), (1, 256), (2, 88)]
    with pytest.raises(DomainError):
        run_batches(lambda b, size: size, 0)


def test_full_process_independent_of_thread_count(step3):
    one = sample_full_process(step3, [0.2, 0.5], 600, seed=7, threads=1)
    three = sample_full_process(step3, [0.2, 0.5], 600, seed=7, threads=3)
    assert np.array_equal(one.occupation, three.occupation)
    assert np.array_equal(one.tally.births, three.tally.births)


def test_labeled_sampling_independent_of_thread_count(params3):
    state0 = LabeledState((-1, 1))
    one = sample_labeled(params3, state0, 0.4, 600, seed=3, threads=1)
    three = sample_labeled(params3, state0, 0.4, 600, seed=3, threads=3)
    assert np.array_equal(one, three)


def test_closed_system_conserves_particles():
    params = LatticeParams(n=4, j=0.0)
    eta0 = ParticleConfig.alternating(params)
    sample = sample_full_process(eta0, [0.1, 1.0], 300, seed=11)
    assert np.all(sample.occupation.sum(axis=2) == eta0.count)
    assert sample.tally.births.sum() == 0 and sample.tally.deaths.sum() == 0
    assert sample.tally.birth_rate(1.0) == 0.0


def test_single_trajectory(step3):
    path = run_full_process(step3, [0.0, 0.3], seed=5)
    assert path[0] == step3
    assert len(path) == 2
    with pytest.raises(DomainError):
        run_full_process(step3, [0.3, 0.1], seed=5)


@pytest.mark.parametrize("t", [0.2, 1.0])
def test_marginals_match_exact_distribution(params3, step3, t):
    replicas = 20000
    sample = sample_full_process(step3, [t], replicas, seed=2024)
    exact = site_marginals(params3, step3, t)
    se = np.sqrt(exact * (1.0 - exact) / replicas)
    z = (sample.site_means() - exact) / np.maximum(se, 1e-12)
    assert np.max(np.abs(z)) < 4.5
    assert sample.site_std_errors().shape == (params3.size,)


def test_reservoirs_create_and_destroy_particles(params3):
    sample = sample_full_process(ParticleConfig.filled(params3, 0), [1.0], 400, seed=9)
    assert sample.tally.births.sum() > 0
    assert sample.tally.birth_rate(1.0) > 0.0


# ---------------------------------------------------------------------------
# Меченые частицы
# ---------------------------------------------------------------------------

def test_single_labeled_particle_follows_reflected_kernel(params3):
    positions = sample_labeled(params3, LabeledState((0,)), 0.3, 20000, seed=17)
    expected = reflected_kernel_matrix(params3, 0.3).values[params3.index(0)]
    assert _chi_square_pvalue(positions[:, 0] + params3.n, expected) >= 0.001
    occupation = labeled_occupation(params3, positions)
    assert occupation.sum() == pytest.approx(1.0)


def test_labeled_particles_stay_distinct(params3):
    positions = sample_labeled(params3, LabeledState((-3, 0, 3)), 1.0, 500, seed=1)
    assert np.all(np.abs(positions) <= params3.n)
    assert np.all(positions[:, 0] != positions[:, 1])
    assert np.all(positions[:, 1] != positions[:, 2])
    assert np.all(positions[:, 0] != positions[:, 2])


def test_marks_are_ordered_and_touch_particles(params3):
    state, marks = run_marks_stirring(params3, LabeledState((-1, 2)), 0.5, seed=4)
    state.check_inside(params3)
    times = [m.time for m in marks]
    assert times == sorted(times)
    assert all(0.0 <= s <= 0.5 for s in times)
    assert {m.attribute for m in marks} <= {MarkAttribute.ACTIVE, MarkAttribute.PASSIVE}
    assert all(-params3.n - 1 <= m.bond <= params3.n for m in marks)
    with pytest.raises(DomainError):
        run_marks_stirring(params3, LabeledState((0,)), -0.1, seed=4)


@pytest.mark.parametrize("seed", [4, 5, 6])
def test_replaying_recorded_marks_reproduces_trajectory(params3, seed):
    start = (-3, 0, 1)
    state, marks = run_marks_stirring(params3, LabeledState(start), 0.8, seed=seed)
    positions = list(start)
    for mark in marks:
        assert mark.bond in positions or mark.bond + 1 in positions
        inside = -params3.n <= mark.bond <= params3.n - 1
        if mark.attribute is MarkAttribute.ACTIVE and inside:
            positions = [mark.bond + 1 if x == mark.bond else mark.bond if x == mark.bond + 1 else x
                         for x in positions]
    assert tuple(positions) == state.positions


# ---------------------------------------------------------------------------
# Статистика пар
# ---------------------------------------------------------------------------

def test_pair_stats_consistency():
    params = LatticeParams(n=5)
    result = pair_stats(params, 0, 2, 0.5, 2000, seed=21)
    assert result.replicas == 2000
    assert np.array_equal(np.isfinite(result.tau), result.n_marks >= 1)
    assert np.all(result.occupation <= result.horizon + 1e-12)
    assert np.all(result.occupation >= 0.0)
    assert survival_curve(result, [0.0])[0] == 1.0
    curve = survival_curve(result, [0.05, 0.2, 0.5])
    assert np.all(np.diff(curve) <= 0)
    assert 0.0 <= mark_tail_frequency(result) <= 1.0
    assert result.stats()[0].horizon == 0.5


def test_pair_stats_input_checks():
    params = LatticeParams(n=5)
    with pytest.raises(DomainError):
        pair_stats(params, 1, 1, 0.5, 10, seed=0)
    stopped = pair_stats(params, 0, 1, 0.2, 64, seed=0, stop_at_first_mark=True)
    with pytest.raises(DomainError):
        mark_tail_frequency(stopped)
    with pytest.raises(DomainError):
        survival_curve(stopped, [0.3])


def test_pair_stats_with_spectators():
    params = LatticeParams(n=6)
    result = pair_stats(params, -1, 1, 0.3, 256, seed=8, spectators=(0, 4))
    assert np.array_equal(np.isfinite(result.tau), result.n_marks >= 1)


@pytest.mark.slow
def test_survival_decays_like_inverse_square_root():
    params = LatticeParams(n=100)
    result = pair_stats(params, 0, 1, 1.0, 4000, seed=31, threads=4, stop_at_first_mark=True)
    assert survival_slope(result, 1e2, 1e4, 12) == pytest.approx(-0.5, abs=0.1)


@pytest.mark.slow
def test_mark_count_tail_is_rare():
    # ε⁻²t = 10⁴; N ≈ время соседства · ε⁻², а оно порядка √(2λ)|Z| ≈ 141|Z|
    params = LatticeParams(n=100)
    result = pair_stats(params, 0, 1, 1.0, 1024, seed=37, threads=4)
    replicas = result.replicas
    excess = result.n_marks - params.n ** 2 * result.occupation
    assert abs(excess.mean()) <= 5.0 * excess.std() / np.sqrt(replicas)

    rare = mark_tail_frequency(result, zeta=0.2)
    assert rare <= 0.01 + 3.0 * np.sqrt(0.01 * 0.99 / replicas)
    assert mark_tail_frequency(result, zeta=0.1) >= rare


@pytest.mark.slow
def test_lowest_priority_deviation_is_rare():
    params = LatticeParams(n=100)
    sample = sample_coupling(params, LabeledState((-1, 0, 1)), (0, 1, 2), 1.0, 256, seed=41)
    assert sample.top_identity.all()
    rare = deviation_frequency(sample, zeta=0.2)
    assert rare <= 0.05 + 3.0 * np.sqrt(0.05 * 0.95 / 256)
    assert deviation_frequency(sample, zeta=0.05) >= rare


# ---------------------------------------------------------------------------
# Двойственность и антисимметрия
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("sites", [(0,), (-1, 1), (-2, 0, 1)])
def test_duality_by_simulation(step3, sites):
    result = duality_check(sites, step3, 0.4, 4000, seed=13)
    assert abs(result.z) < 4.0


def test_duality_empty_set(step3):
    result = duality_check((), step3, 0.4, 10, seed=0)
    assert (result.lhs, result.rhs, result.z) == (1.0, 1.0, 0.0)


def test_antisymmetry_of_sign_difference():
    params = LatticeParams(n=4)
    result = antisymmetry_check(params, LabeledState((-1, 1)), 0.2, 0.5, sign_difference,
                                4000, seed=19)
    assert abs(result.z) < 4.0


def test_antisymmetry_input_checks(params3):
    with pytest.raises(DomainError):
        antisymmetry_check(params3, LabeledState((-1, 1)), 0.5, 0.5, sign_difference, 10, seed=0)
    with pytest.raises(DomainError):
        antisymmetry_check(params3, LabeledState((0,)), 0.1, 0.5, sign_difference, 10, seed=0)


# ---------------------------------------------------------------------------
# Каплинг
# ---------------------------------------------------------------------------

def test_coupling_run_snapshots():
    params = LatticeParams(n=4)
    run = run_coupling(params, LabeledState((-1, 0, 2)), (0, 1, 2), 0.5, seed=6,
                       sample_times=[0.1, 0.3, 0.5])
    assert [s.time for s in run.states] == [0.1, 0.3, 0.5]
    assert run.top_identity
    for state in run.states:
        assert state.discrepancy >= 0
        assert state.stirring.positions[0] == state.independent.positions[0]
        assert len(set(state.stirring.positions)) == 3
    assert set(run.attempts) == {(i, d) for i in range(3) for d in ("r", "l")}


@pytest.mark.parametrize("seed", range(40))
def test_auxiliary_walk_rejoins_independent_after_every_event(seed):
    params = LatticeParams(n=2)
    times = np.linspace(0.05, 2.0, 40)
    run = run_coupling(params, LabeledState((1, 2)), (0, 1), 2.0, seed=seed, sample_times=times)
    for state in run.states:
        state.auxiliary.check_inside(params)
        assert state.auxiliary.positions == state.independent.positions


def test_coupling_input_checks():
    params = LatticeParams(n=4)
    with pytest.raises(DomainError):
        run_coupling(params, LabeledState((-1, 1)), (0, 0), 0.5, seed=0)
    with pytest.raises(DomainError):
        run_coupling(params, LabeledState((-1, 1)), (0, 1), 0.5, seed=0, sample_times=[0.7])


def test_top_priority_label_moves_like_independent_walk():
    params = LatticeParams(n=3)
    sample = sample_coupling(params, LabeledState((0, 1)), (1, 0), 0.3, 8000, seed=23)
    assert sample.top_identity.all()
    assert sample.lowest_priority == 0
    top = sample.stirring[:, 1]
    assert np.array_equal(top, sample.independent[:, 1])
    expected = reflected_kernel_matrix(params, 0.3).values[params.index(1)]
    assert _chi_square_pvalue(top + params.n, expected) >= 0.001
    assert 0.0 <= deviation_frequency(sample) <= 1.0
