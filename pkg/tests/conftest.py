import numpy as np
import pytest

from markovdiff.core import Grid, ScalarField, normalize_rho


@pytest.fixture
def line_grid():
    return Grid.uniform(-8.0, 8.0, 401)


def gaussian(grid, center=0.0, var=1.0):
    return normalize_rho(ScalarField(grid, np.exp(-(grid.x - center) ** 2 / (2 * var))))
