import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_grid(rng, h=40, w=40, p_occ=0.2, res=0.5):
    """Random occupancy raster with walled boundary."""
    from sectorscout.world import FREE, OCCUPIED, OccupancyGrid

    cells = np.where(rng.random((h, w)) < p_occ, OCCUPIED, FREE).astype(np.int8)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = OCCUPIED
    return OccupancyGrid(cells, res)


def random_free_pose(rng, grid, heading=None):
    from sectorscout.world import FREE, AgentPose

    free_r, free_c = np.nonzero(grid.cells == FREE)
    k = int(rng.integers(free_r.size))
    x = (free_c[k] + float(rng.random())) * grid.resolution
    y = (free_r[k] + float(rng.random())) * grid.resolution
    h = float(rng.random() * 2 * np.pi) if heading is None else heading
    return AgentPose(x, y, h)
