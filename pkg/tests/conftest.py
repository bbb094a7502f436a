import numpy as np
import pytest

from costmap_traffic import mapio, scenarios
from costmap_traffic.grid import CostGrid, GridMeta


@pytest.fixture(scope="session")
def scenario_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("scenarios")
    return scenarios.build_all(root)


@pytest.fixture(scope="session")
def load(scenario_root):
    def _load(name):
        return mapio.load_scenario(scenario_root[name])
    return _load


def grid_of(cells, resolution=1.0):
    cells = np.asarray(cells, dtype=np.uint8)
    return CostGrid(GridMeta(resolution, cells.shape[1], cells.shape[0]), cells)
