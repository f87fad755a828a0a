import numpy as np
import pytest

from stirring_lab.lattice import (
    in_reservoir,
    laplacian_matrix,
    preimage_offsets,
    reflection_map,
    reflection_map_iterated,
    reservoir_sites,
)
from stirring_lab.models import (
    BlockAverage,
    DomainError,
    LabeledState,
    LatticeParams,
    ParticleConfig,
    Side,
    VFunctionTable,
    parse_config,
    parse_sites,
)


# ---------------------------------------------------------------------------
# Параметры и конфигурации
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n,k", [(0, 1), (2, 3), (2, 0)])
def test_lattice_params_reject_bad_geometry(n, k):
    with pytest.raises(DomainError):
        LatticeParams(n=n, k=k)


def test_lattice_params_rejects_negative_rate():
    with pytest.raises(DomainError):
        LatticeParams(n=3, j=-0.5)


def test_lattice_params_rates():
    params = LatticeParams(n=4, k=2, j=3.0)
    assert params.size == 9
    assert params.epsilon == 0.25
    assert params.exchange_rate == 8.0
    assert params.reservoir_rate == 6.0
    assert params.sites().tolist() == list(range(-4, 5))
    assert params.index(-4) == 0 and params.index(4) == 8
    with pytest.raises(DomainError):
        params.index(5)


def test_named_configurations():
    params = LatticeParams(n=2)
    assert parse_config(params, "step").to_string() == "11100"
    assert parse_config(params, "empty").count == 0
    assert parse_config(params, "full").count == 5
    assert parse_config(params, "alternating").to_string() == "10101"
    assert parse_config(params, "01100").occupied_sites() == [-1, 0]
    with pytest.raises(DomainError):
        parse_config(params, "0110")
    with pytest.raises(DomainError):
        parse_config(params, "zigzag")


def test_config_index_is_bitmask():
    params = LatticeParams(n=1)
    assert ParticleConfig.from_sites(params, [-1]).as_index() == 1
    assert ParticleConfig.from_sites(params, [1]).as_index() == 4


def test_parse_sites():
    assert parse_sites("-1, 1") == (-1, 1)
    assert parse_sites("") == ()
    assert parse_sites(None) == ()
    for text in ("a,1", "1.5", "-"):
        with pytest.raises(DomainError):
            parse_sites(text)


def test_labeled_state_exclusion():
    with pytest.raises(DomainError):
        LabeledState((0, 0))
    walkers = LabeledState((0, 0), exclusive=False)
    assert walkers.n == 2
    assert walkers.alive == (0, 1)


def test_v_table_lookup_sorts_key(params2):
    table = VFunctionTable(params2, 0.5, {(-1, 1): 0.25})
    assert table.get((1, -1)) == 0.25
    assert table.get(()) == 1.0


def test_block_average_bounds():
    with pytest.raises(DomainError):
        BlockAverage(center=0, half_width=2, value=1.5)


def test_side_helpers():
    assert Side.PLUS.sign == 1 and Side.MINUS.sign == -1
    assert Side.PLUS.other is Side.MINUS


# ---------------------------------------------------------------------------
# Отражение ψ_N
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_reflection_map_closed_form_matches_iteration(n):
    params = LatticeParams(n=n)
    for z in range(-8 * n - 7, 8 * n + 8):
        assert reflection_map(params, z) == reflection_map_iterated(params, z)


def test_reflection_map_fixes_lattice_and_folds_walls():
    params = LatticeParams(n=3)
    sites = params.sites()
    assert np.array_equal(reflection_map(params, sites), sites)
    assert reflection_map(params, 4) == 3
    assert reflection_map(params, -4) == -3
    assert reflection_map(params, 14) == reflection_map(params, 0)


def test_preimages_map_back():
    params = LatticeParams(n=2)
    for y in params.sites():
        images = preimage_offsets(params, int(y), reach=30)
        assert np.all(reflection_map(params, images) == y)


# ---------------------------------------------------------------------------
# Резервуары и лапласиан
# ---------------------------------------------------------------------------

def test_reservoirs():
    params = LatticeParams(n=3, k=2)
    assert [x for x in params.sites() if in_reservoir(params, x, Side.PLUS)] == [2, 3]
    assert [x for x in params.sites() if in_reservoir(params, x, Side.MINUS)] == [-3, -2]
    assert reservoir_sites(params, Side.PLUS).tolist() == [3, 2]
    assert reservoir_sites(params, Side.MINUS).tolist() == [-3, -2]
    with pytest.raises(DomainError):
        in_reservoir(params, 4, Side.PLUS)


def test_laplacian_is_symmetric_and_conservative():
    lap = laplacian_matrix(LatticeParams(n=4))
    assert np.allclose(lap, lap.T)
    assert np.allclose(lap.sum(axis=1), 0.0)
    assert lap[0, 0] == -1.0 and lap[4, 4] == -2.0
