import numpy as np
import pytest

from gliorank import ModelParams, Segmentation, TissueModel, VoxelGrid


@pytest.fixture
def grid2d():
    return VoxelGrid((32, 32, 1))


@pytest.fixture
def white_tissue_2d(grid2d):
    labels = np.ones(grid2d.shape, dtype=np.uint8)
    return TissueModel(grid=grid2d, labels=labels)


def make_white_tissue(dims, mask=None):
    grid = VoxelGrid(dims, 1.0, mask)
    labels = np.where(grid.brain_mask, 1, 0).astype(np.uint8)
    return TissueModel(grid=grid, labels=labels)


@pytest.fixture
def default_params():
    return ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.01, tau=0.0)
