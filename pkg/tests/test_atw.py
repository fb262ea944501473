import numpy as np
import pytest

from mmflow.atw import (StepEnergy, atw_step, build_step_energy, comparison_check, dissipation_check,
                        enumerate_minimizers, export_flow_instance, interface_displacement, minimize_step,
                        truncation_sequence_check)
from mmflow.common import GridTooLarge, InfeasibleConstraints, MarginBreach
from mmflow.core import (BOUNDED_COMPLEMENT, CLAMP, MAXIMAL, MINIMAL, NEGATIVE_PART, CellSet, Grid,
                         LevelFunction, Nonlinearity, Phase)
from mmflow.distance import level_band, signed_distance
from mmflow.oracles import (barrier_radius, exact_ball_radius, fd_reference_evolve, hausdorff_distance,
                            measure_radius)
from mmflow.perimeter import PerimeterModel

from .conftest import make_context


@pytest.mark.parametrize("shape, instances", [((4, 4), 15), ((4, 5), 3)])
def test_flow_matches_enumeration(rs, shape, instances):
    J = PerimeterModel.crofton(8)
    grid = Grid(shape[0], shape[1], 1.0)
    for _ in range(instances):
        unary = rs.uniform(-3.0, 3.0, grid.shape)
        draw = rs.uniform(size=grid.shape)
        unary[draw < 0.1] = -np.inf
        unary[draw > 0.9] = np.inf
        se = StepEnergy(grid, J, unary)
        flow = minimize_step(se)
        oracle = enumerate_minimizers(se)
        assert flow.energy == pytest.approx(oracle.energy, abs=1e-9)
        assert flow.minimal == oracle.minimal
        assert flow.maximal == oracle.maximal


def test_enumeration_at_the_free_cell_limit(rs):
    grid = Grid(4, 5, 1.0)
    se = StepEnergy(grid, PerimeterModel.crofton(16), rs.uniform(-2.0, 2.0, grid.shape))
    assert int(se.free.sum()) == 20
    flow = minimize_step(se)
    oracle = enumerate_minimizers(se)
    assert flow.energy == pytest.approx(oracle.energy, abs=1e-9)
    assert flow.minimal == oracle.minimal
    assert flow.maximal == oracle.maximal


def test_tied_energy_has_distinct_extreme_minimizers():
    grid = Grid(4, 4, 0.5)
    se = StepEnergy(grid, PerimeterModel.crofton(16), np.zeros(grid.shape))
    result = minimize_step(se)
    assert result.minimal.is_empty()
    assert result.maximal.is_full()
    assert result.energy == 0.0
    oracle = enumerate_minimizers(se)
    assert oracle.argmin_count == 2


def test_infeasible_and_oversized_energies():
    grid = Grid(4, 4, 1.0)
    clash = CellSet.rectangle(grid, (0, 0), (1, 1))
    se = StepEnergy(grid, PerimeterModel.crofton(8), np.zeros(grid.shape), forced_in=clash, forced_out=clash)
    with pytest.raises(InfeasibleConstraints):
        minimize_step(se)
    with pytest.raises(InfeasibleConstraints):
        enumerate_minimizers(se)
    big = Grid(5, 5, 1.0)
    with pytest.raises(GridTooLarge):
        enumerate_minimizers(StepEnergy(big, PerimeterModel.crofton(8), np.zeros(big.shape)))


def test_unary_terms_follow_the_distance(ctx):
    E = CellSet.disk(ctx.grid, (0.0, 0.0), 0.25)
    se = build_step_energy(E, Phase(), ctx.perimeter, ctx.nonlinearity, ctx.anisotropy, 0.0, ctx.h)
    sd = signed_distance(E, ctx.anisotropy).values
    assert np.allclose(se.unary, sd / ctx.h * ctx.grid.dx ** 2)
    assert np.all(se.unary[E.membership] < 0)
    clamp = Nonlinearity(CLAMP, M=2.0)
    se = build_step_energy(E, Phase(), ctx.perimeter, clamp, ctx.anisotropy, 0.0, ctx.h)
    assert np.array_equal(se.forced_out.membership, sd / ctx.h >= 2.0)
    assert np.array_equal(se.forced_in.membership, sd / ctx.h <= -2.0)


def test_step_shrinks_a_disk(ctx):
    E = CellSet.disk(ctx.grid, (0.0, 0.0), 0.3)
    stats = []
    F = atw_step(E, Phase(), ctx, 0, stats=stats)
    assert F.issubset(E)
    assert F.count() < E.count()
    assert len(stats) == 1 and stats[0].nodes < ctx.grid.size


def test_complement_step_is_dual():
    ctx = make_context(nonlinearity=Nonlinearity(NEGATIVE_PART))
    E = CellSet.disk(ctx.grid, (0.05, 0.0), 0.25)
    outside = Phase(BOUNDED_COMPLEMENT)
    for choice, dual in ((MINIMAL, MAXIMAL), (MAXIMAL, MINIMAL)):
        hole = atw_step(E.complement(), outside, ctx, 0, choice)
        dual_ctx = ctx.replace(nonlinearity=ctx.nonlinearity.reflect())
        assert hole == atw_step(E, Phase(), dual_ctx, 0, dual).complement()


def test_margin_breach_is_reported_with_step(ctx):
    E = CellSet.rectangle(ctx.grid, (-0.5, -0.1), (0.0, 0.1))
    with pytest.raises(MarginBreach) as e:
        atw_step(E, Phase(), ctx, 3)
    assert e.value.step == 3
    assert e.value.exit_code == 5


def test_comparison_of_nested_sets(ctx):
    inner = CellSet.disk(ctx.grid, (0.0, 0.0), 0.15)
    outer = CellSet.disk(ctx.grid, (0.02, 0.0), 0.3)
    assert all(comparison_check(inner, outer, ctx, 0))
    assert all(comparison_check(outer.complement(), inner.complement(), ctx, 0,
                                Phase(BOUNDED_COMPLEMENT), Phase(BOUNDED_COMPLEMENT)))


def test_larger_inverse_selection_gives_smaller_sets(ctx):
    E = CellSet.disk(ctx.grid, (0.0, 0.0), 0.2).union(CellSet.rectangle(ctx.grid, (0.0, -0.25), (0.25, 0.0)))
    report = dissipation_check(E, ctx, 0, Nonlinearity(), Nonlinearity(NEGATIVE_PART))
    assert report.minimal and report.maximal


@pytest.mark.parametrize("choice", [MINIMAL, MAXIMAL])
def test_truncated_energies_converge_monotonically(ctx, choice):
    E = CellSet.disk(ctx.grid, (0.0, 0.0), 0.25)
    report = truncation_sequence_check(E, ctx, 0, [1.0, 10.0, 100.0, 1e6], choice)
    assert report.nested
    assert report.converged
    assert len(report.chain) == 4


def test_interface_displacement():
    grid = Grid.centered(32, 32, 1.0 / 32)
    E = CellSet.disk(grid, (0.0, 0.0), 0.25)
    assert interface_displacement(E, E) == 0.0
    grown = CellSet.disk(grid, (0.0, 0.0), 0.25 + 2.0 / 32)
    assert 1.0 / 32 <= interface_displacement(E, grown) <= 3.0 / 32
    assert interface_displacement(CellSet.empty(grid), E) == float('inf')


def test_flow_instance_export(ctx, tmpdir):
    E = CellSet.disk(ctx.grid, (0.0, 0.0), 0.2)
    se = build_step_energy(E, Phase(), ctx.perimeter, ctx.nonlinearity, ctx.anisotropy, 0.0, ctx.h)
    path = str(tmpdir.join('flow.csv'))
    export_flow_instance(se, path)
    with open(path) as f:
        assert f.readline().strip() == 'tail,head,capacity'
        assert len(f.readlines()) > 0


def test_clamped_step_stays_in_the_speed_band():
    M = 5.0
    ctx = make_context(nonlinearity=Nonlinearity(CLAMP, M=M))
    E = CellSet.disk(ctx.grid, (-0.05, 0.0), 0.2).union(CellSet.rectangle(ctx.grid, (0.0, -0.25), (0.25, 0.0)))
    sd = signed_distance(E, ctx.anisotropy)
    band = M * ctx.h
    for choice in (MINIMAL, MAXIMAL):
        F = atw_step(E, Phase(), ctx, 0, choice)
        assert F.issubset(level_band(sd, band))
        assert level_band(sd, -band).issubset(F)
    assert not level_band(sd, -band).is_empty()


def test_step_commutes_with_lattice_translations(ctx):
    E = CellSet.disk(ctx.grid, (-0.05, 0.0), 0.15).union(CellSet.rectangle(ctx.grid, (0.0, -0.2), (0.2, 0.0)))
    for v in ((3, -2), (-1, 4)):
        for choice in (MINIMAL, MAXIMAL):
            assert atw_step(E.shift(v), Phase(), ctx, 0, choice) == atw_step(E, Phase(), ctx, 0, choice).shift(v)


@pytest.mark.parametrize("n", [Nonlinearity(), Nonlinearity(CLAMP, M=2.0), Nonlinearity(NEGATIVE_PART)])
def test_comparison_across_phases(n):
    ctx = make_context(nonlinearity=n)
    E1 = CellSet.disk(ctx.grid, (-0.2, 0.0), 0.1)
    hole = CellSet.disk(ctx.grid, (0.15, 0.0), 0.12)
    E2 = hole.complement()
    assert all(comparison_check(E1, E2, ctx, 0, Phase(), Phase(BOUNDED_COMPLEMENT)))


@pytest.fixture(scope='module')
def moving_disk():
    """
    Classical flow of a disk with a step large enough that the interface sheds at least
    one ring of cells per step: 12 cells of radius, exact move about 1.2 cells per step.
    """
    ctx = make_context(n=48, dx=1.0 / 24, h=0.025, T=0.075)
    sets = [CellSet.disk(ctx.grid, (0.0, 0.0), 0.5)]
    for k in range(ctx.params.step_count):
        sets.append(atw_step(sets[-1], Phase(), ctx, k))
    return ctx, sets


def test_moving_disk_follows_the_radius_law(moving_disk):
    ctx, sets = moving_disk
    dx = ctx.grid.dx
    radii = [measure_radius(E).radius for E in sets]
    assert len(radii) == 4
    assert all(after < before for before, after in zip(radii[:-1], radii[1:]))
    assert radii[-1] <= 0.5 - 2 * dx
    for k, r in enumerate(radii[1:], 1):
        t = k * ctx.h
        assert abs(r - exact_ball_radius(ctx.nonlinearity, ctx.forcing, 0.5, t)) <= 3 * dx
        assert r >= barrier_radius(0.5, t, ctx) - 2 * dx


def test_moving_disk_agrees_with_finite_differences(moving_disk):
    ctx, sets = moving_disk
    times = [k * ctx.h for k in range(1, len(sets))]
    u0 = LevelFunction.cone(ctx.grid, (0.0, 0.0), 0.5, -0.5, 0.5)
    states = fd_reference_evolve(u0, ctx.nonlinearity, ctx.forcing, times[-1], times)
    for E, state in zip(sets[1:], states):
        assert hausdorff_distance(E, state.superlevel(0.0)) <= 5 * ctx.grid.dx
    assert measure_radius(states[-1].superlevel(0.0)).radius < 0.5 - 2 * ctx.grid.dx
