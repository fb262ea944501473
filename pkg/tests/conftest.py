import numpy as np
import pytest

from mmflow.core import Anisotropy, FlowContext, Forcing, Grid, Nonlinearity, SchemeParams
from mmflow.perimeter import PerimeterModel


def make_context(n=32, dx=1.0 / 32, h=0.01, T=None, margin=4, levels=8, nonlinearity=None, forcing=None,
                 perimeter=None, anisotropy=None, minimizer='minimal', threads=1):
    """a FlowContext on a small centered grid, classical isotropic flow unless told otherwise"""
    grid = Grid.centered(n, n, dx)
    params = SchemeParams(h, T if T is not None else h, level_count=levels, margin=margin,
                          minimizer_choice=minimizer)
    return FlowContext(grid, perimeter or PerimeterModel.crofton(16), anisotropy or Anisotropy(),
                       nonlinearity or Nonlinearity(), forcing or Forcing(), params, threads)


@pytest.fixture
def ctx():
    return make_context()


@pytest.fixture
def rs():
    return np.random.RandomState(1234)
