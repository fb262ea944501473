import math

import numpy as np
import pytest

from mmflow.common import ConfigError, MMFlowError
from mmflow.core import (BOUNDED_SET, CLAMP, CONSTANT, IDENTITY, MAX_NORM, NEGATIVE_PART,
                         PIECEWISE, POWER, SAMPLED, WEIGHTED_EUCLIDEAN, Anisotropy, CellSet, Forcing, Grid,
                         LevelFunction, Nonlinearity, Phase, SchemeParams, forcing_step_average, g_eval,
                         psi_polar, psi_polar_sweep, shift_array)


def test_grid_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        Grid(3, 8, 1.0)
    with pytest.raises(ConfigError) as e:
        Grid(8, 8, 0.0)
    assert "grid.dx" in str(e.value)


def test_centered_grid_is_symmetric():
    grid = Grid.centered(9, 6, 0.5)
    X, Y = grid.coordinates()
    assert X.shape == (9, 6)
    assert X.mean() == pytest.approx(0.0)
    assert Y.mean() == pytest.approx(0.0)
    assert grid.nearest_cell((0.0, 0.0)) == (4, 2) or grid.nearest_cell((0.0, 0.0)) == (4, 3)


def test_margin_mask_width():
    grid = Grid(10, 12, 1.0)
    mask = grid.margin_mask(2)
    assert mask[:2, :].all() and mask[:, -2:].all()
    assert not mask[2:-2, 2:-2].any()


def test_disk_and_rectangle():
    grid = Grid.centered(5, 5, 1.0)
    assert CellSet.disk(grid, (0.0, 0.0), 1.0).count() == 5
    square = CellSet.rectangle(Grid.centered(7, 7, 1.0), (-1.0, -1.0), (1.0, 1.0))
    assert square.count() == 9
    assert square.boundary().count() == 8
    assert square.area() == 9.0


def test_set_algebra():
    grid = Grid(6, 6, 1.0)
    A = CellSet.rectangle(grid, (0, 0), (2, 5))
    B = CellSet.rectangle(grid, (2, 0), (5, 5))
    assert A.intersection(B).count() == 6
    assert A.union(B).is_full()
    assert A.difference(B).union(A.intersection(B)) == A
    assert A.symmetric_difference(B).count() == 30
    assert A.complement().complement() == A
    assert A.intersection(B).issubset(A)
    assert not A.issubset(B)


def test_cell_sets_are_immutable():
    E = CellSet.empty(Grid(4, 4, 1.0))
    with pytest.raises(ValueError):
        E.membership[0, 0] = True


def test_shift_moves_cells_and_guards_the_edge():
    grid = Grid(6, 6, 1.0)
    E = CellSet.rectangle(grid, (1, 1), (2, 2))
    moved = E.shift((2, 1))
    assert moved == CellSet.rectangle(grid, (3, 2), (4, 3))
    with pytest.raises(MMFlowError):
        E.shift((-2, 0))
    assert E.complement().shift((1, 0), fill=True).count() == 32


def test_shift_array_fill():
    values = np.arange(16.0).reshape(4, 4)
    out = shift_array(values, (1, 0), -1.0)
    assert (out[0] == -1.0).all()
    assert (out[1:] == values[:-1]).all()


def test_phase_of_and_storage():
    grid = Grid.centered(16, 16, 1.0)
    E = CellSet.disk(grid, (0.0, 0.0), 4.0)
    assert Phase.of(E, 2) == Phase(BOUNDED_SET)
    complement = Phase.of(E.complement(), 2)
    assert complement.is_complement
    assert complement.stored(E.complement()) == E
    assert complement.restore(E) == E.complement()
    with pytest.raises(ConfigError):
        Phase("neither")


def test_level_function_bounds():
    grid = Grid(4, 4, 1.0)
    with pytest.raises(MMFlowError):
        LevelFunction(grid, np.full((4, 4), 2.0), 0.0, 1.0)
    with pytest.raises(MMFlowError):
        LevelFunction(grid, np.zeros((4, 4)), 1.0, 1.0)


def test_cone_superlevels_are_disks():
    grid = Grid.centered(21, 21, 1.0)
    u = LevelFunction.cone(grid, (0.0, 0.0), 3.3, -2.0, 2.0)
    for s in (-1.5, 0.5, 1.7):
        assert u.superlevel(s) == CellSet.disk(grid, (0.0, 0.0), 3.3 - s)
    assert u.respects_margin(3)


def test_level_function_shift_and_constant():
    grid = Grid.centered(12, 12, 1.0)
    u = LevelFunction.characteristic(CellSet.disk(grid, (0.5, 0.5), 2.0))
    v = u.add_constant(0.5)
    assert (v.floor_value, v.ceil_value, v.outside) == (0.5, 1.5, 0.5)
    assert np.array_equal(v.values, u.values + 0.5)
    assert u.shift((1, 1)).superlevel(1.0) == u.superlevel(1.0).shift((1, 1))


def test_psi_and_polar():
    euclid = Anisotropy()
    square = Anisotropy(MAX_NORM)
    assert euclid.c_psi == 1.0
    assert float(square.psi((3.0, -4.0))) == 4.0
    assert psi_polar(square, (3.0, -4.0)) == 7.0
    assert psi_polar(euclid, (3.0, 4.0)) == 5.0


@pytest.mark.parametrize("a", [Anisotropy(), Anisotropy(MAX_NORM), Anisotropy(WEIGHTED_EUCLIDEAN, (1.0, 4.0))])
def test_polar_matches_sweep(a):
    for v in [(1.0, 0.0), (0.3, -0.7), (-2.0, 1.5)]:
        exact = psi_polar(a, v)
        swept = psi_polar_sweep(a, v)
        assert swept <= exact + 1e-12
        assert swept == pytest.approx(exact, rel=1e-4)


@pytest.mark.parametrize("a", [Anisotropy(MAX_NORM), Anisotropy(WEIGHTED_EUCLIDEAN, (0.25, 2.0))])
def test_c_psi_bounds(a, rs):
    p = rs.normal(size=(200, 2))
    norm = np.hypot(p[:, 0], p[:, 1])
    psi = a.psi(p)
    assert np.all(norm / a.c_psi <= psi + 1e-12)
    assert np.all(psi <= a.c_psi * norm + 1e-12)


@pytest.mark.parametrize("a", [Anisotropy(), Anisotropy(MAX_NORM), Anisotropy(WEIGHTED_EUCLIDEAN, (0.25, 2.0))])
def test_psi_is_even_and_positively_homogeneous(a, rs):
    p = rs.normal(size=(1000, 2))
    t = rs.uniform(0.01, 100.0, size=1000)
    for f in (a.psi, a.polar):
        assert np.allclose(f(-p), f(p), rtol=1e-14, atol=0)
        assert np.allclose(f(t[:, None] * p), t * f(p), rtol=1e-12, atol=0)
        assert np.all(f(p) > 0)


@pytest.mark.parametrize("n, s", [
    (Nonlinearity(IDENTITY), np.linspace(-3.0, 3.0, 25)),
    (Nonlinearity(CLAMP, M=2.0), np.linspace(-1.99, 1.99, 25)),
    (Nonlinearity(POWER, gamma=2.0), np.linspace(-3.0, 3.0, 25)),
    (Nonlinearity(NEGATIVE_PART), np.linspace(-3.0, -0.01, 25)),
    (Nonlinearity(PIECEWISE, table=[(-1.0, -1.0), (0.0, 0.0), (1.0, 0.0), (2.0, 1.0)]), np.linspace(-0.99, 0.99, 25)),
    ])
def test_G_inverts_g_on_the_open_range(n, s):
    assert np.allclose(n.G(n.g(s)), s, rtol=0, atol=1e-8)
    reflected = n.reflect()
    assert np.allclose(reflected.G(reflected.g(-s)), -s, rtol=0, atol=1e-8)


def test_anisotropy_configuration_errors():
    with pytest.raises(ConfigError):
        Anisotropy(WEIGHTED_EUCLIDEAN)
    with pytest.raises(ConfigError):
        Anisotropy("hexagonal")


def test_nonlinearity_saturation_limits():
    assert Nonlinearity(IDENTITY).a == float('inf')
    clamp = Nonlinearity(CLAMP, M=2.0)
    assert (clamp.a, clamp.b) == (2.0, 2.0)
    negative = Nonlinearity(NEGATIVE_PART)
    assert (negative.a, negative.b) == (float('inf'), 0.0)
    reflected = negative.reflect()
    assert (reflected.a, reflected.b) == (0.0, float('inf'))


def test_inverse_selection():
    clamp = Nonlinearity(CLAMP, M=2.0)
    assert g_eval(clamp, 1.5) == 1.5
    assert g_eval(clamp, 2.0) == float('inf')
    assert g_eval(clamp, -3.0) == float('-inf')
    power = Nonlinearity(POWER, gamma=1.0 / 3.0)
    s = np.linspace(-3.0, 3.0, 13)
    assert np.allclose(power.G(power.g(s)), s)
    negative = Nonlinearity(NEGATIVE_PART)
    assert g_eval(negative, -0.5) == -0.5
    assert g_eval(negative, 0.0) == float('inf')


def test_piecewise_takes_plateau_midpoint():
    n = Nonlinearity(PIECEWISE, table=[(-1.0, -1.0), (0.0, 0.0), (1.0, 0.0), (2.0, 1.0)])
    assert (n.a, n.b) == (1.0, 1.0)
    assert g_eval(n, 0.0) == pytest.approx(0.5, abs=1e-8)
    assert g_eval(n, 0.5) == pytest.approx(1.5, abs=1e-8)
    assert g_eval(n, -0.5) == pytest.approx(-0.5, abs=1e-8)
    assert g_eval(n, 1.0) == float('inf')


def test_piecewise_table_is_validated():
    with pytest.raises(ConfigError):
        Nonlinearity(PIECEWISE, table=[(0.0, 0.0), (1.0, 1.0)])
    with pytest.raises(ConfigError):
        Nonlinearity(PIECEWISE, table=[(-1.0, 0.0), (1.0, -1.0)])


def test_reflection_is_odd_symmetric():
    n = Nonlinearity(PIECEWISE, table=[(-1.0, -2.0), (0.0, 0.0), (1.0, 0.5)])
    s = np.linspace(-2.0, 2.0, 17)
    assert np.allclose(n.reflect().G(s), -n.G(-s))
    assert n.reflect().reflect().b == n.b


def test_forcing_kinds():
    assert float(Forcing()(1.0)) == 0.0
    f = Forcing(CONSTANT, value=-3.0)
    assert f.bound == 3.0
    assert float(f.negated()(0.2)) == 3.0
    sampled = Forcing(SAMPLED, times=[0.0, 1.0], values=[0.0, 2.0])
    assert float(sampled(0.25)) == 0.5
    assert float(sampled(5.0)) == 2.0
    with pytest.raises(ConfigError):
        Forcing(SAMPLED, times=[0.0, 0.0], values=[1.0, 1.0])


def test_forcing_step_average():
    assert forcing_step_average(Forcing(CONSTANT, value=4.0), 3, 0.1) == 4.0
    sampled = Forcing(SAMPLED, times=[0.0, 1.0], values=[0.0, 2.0])
    assert forcing_step_average(sampled, 2, 0.1) == pytest.approx(0.5)
    with pytest.raises(MMFlowError):
        forcing_step_average(sampled, -1, 0.1)


def test_scheme_params_collects_errors():
    with pytest.raises(ConfigError) as e:
        SchemeParams(-1.0, 1.0, level_count=1, margin=1, minimizer_choice="middle")
    errors = e.value.errors
    assert any(message.startswith("scheme.h") for message in errors)
    assert any(message.startswith("scheme.levels") for message in errors)
    assert any(message.startswith("grid.margin") for message in errors)
    assert any(message.startswith("scheme.minimizer") for message in errors)


def test_margin_must_exceed_one_step_of_growth():
    params = SchemeParams(1.0, 1.0, margin=2)
    grid = Grid(8, 8, 0.1)
    with pytest.raises(ConfigError):
        params.check_margin(grid, Nonlinearity(CLAMP, M=2.0))
    params.check_margin(grid, Nonlinearity(NEGATIVE_PART))
    params.replace(h=0.01).check_margin(grid, Nonlinearity(CLAMP, M=2.0))
    assert SchemeParams(0.001, 0.049).step_count == 49
    assert math.isinf(Nonlinearity().b)
