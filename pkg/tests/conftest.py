import numpy as np
import pytest

from contactflow.analysis.grids import inner_box, make_grid, sample_points
from contactflow.dynamics.builtins import BumpHamiltonian
from contactflow.dynamics.charts import ChartKind, make_chart


@pytest.fixture
def darboux():
    return make_chart(ChartKind.DARBOUX)


@pytest.fixture
def darboux2():
    return make_chart(ChartKind.DARBOUX, n=2)


@pytest.fixture
def torus():
    return make_chart(ChartKind.TORUS3)


@pytest.fixture
def darboux_grid(darboux):
    return make_grid(darboux, 8)


@pytest.fixture
def torus_grid(torus):
    return make_grid(torus, 8)


@pytest.fixture
def darboux_points(darboux):
    return sample_points(darboux, 24, seed=7, box=inner_box(darboux))


@pytest.fixture
def torus_points(torus):
    return sample_points(torus, 24, seed=7)


@pytest.fixture
def bump(darboux):
    return BumpHamiltonian(darboux, [0.2, 0.1, 0.0], 0.5, amplitude=1.0, tilt=[0.3, -0.2, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(0)
