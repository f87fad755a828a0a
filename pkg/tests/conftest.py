import numpy as np
import pytest

from stirring_lab.models import LatticeParams, ParticleConfig


@pytest.fixture
def params2():
    return LatticeParams(n=2, k=1, j=1.0)


@pytest.fixture
def params3():
    return LatticeParams(n=3, k=1, j=1.0)


@pytest.fixture
def step3(params3):
    return ParticleConfig.step(params3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    """Каталог результатов во временной папке; переменные окружения не протекают в тесты."""
    out = tmp_path / "results"
    monkeypatch.setenv("STIRRING_OUTPUT_DIR", str(out))
    monkeypatch.delenv("STIRRING_THREADS", raising=False)
    return out
