"""
mmflow level-set lifting

Lifts the set step to level functions by evolving a stack of superlevel sets,
iterates it in time, and checks the operator laws the lifting must satisfy.

Copyright (C) 2026 mmflow developers
"""

import logging
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import six
from scipy import ndimage

from .atw import atw_step, interface_displacement
from .common import MMFlowError, NestingViolation
from .core import MAXIMAL, MINIMAL, LevelFunction, Phase

logger = logging.getLogger(__name__)


OperatorLawReport = namedtuple('OperatorLawReport', ['monotone', 'commutes', 'equivariant'])
ModulusReport = namedtuple('ModulusReport', ['worst_violation', 'pairs_checked', 'passed'])
LevelTrackingReport = namedtuple('LevelTrackingReport', ['mismatches', 'passed'])

# one cell: the stored sets move by whole cells, so separations are exact only to dx
MODULUS_SLACK = 1.0


###
#  LevelStack
##
@six.python_2_unicode_compatible
class LevelStack(object):
    """
    Superlevel sets E_i = {u >= s_i} on uniform levels s_1 < ... < s_L.

    levels ([float]):       the levels
    sets ([CellSet]):       nested, E_1 >= E_2 >= ... >= E_L
    floor_value (float):    value reconstructed where no level is attained
    ceil_value (float):     upper bound of the function
    outside (float):        margin constant of the function
    """

    def __init__(self, levels, sets, floor_value, ceil_value, outside):
        self.levels = list(levels)
        self.sets = list(sets)
        self.floor_value = floor_value
        self.ceil_value = ceil_value
        self.outside = outside

    @property
    def grid(self):
        return self.sets[0].grid

    def is_nested(self):
        return all(upper.issubset(lower) for lower, upper in zip(self.sets[:-1], self.sets[1:]))

    def first_nesting_failure(self):
        for i, (lower, upper) in enumerate(zip(self.sets[:-1], self.sets[1:])):
            if not upper.issubset(lower):
                return self.levels[i + 1]
        return None

    def reconstruct(self):
        """u(x) = max{s_i : x in E_i}, floor_value when no level contains x"""
        values = np.full(self.grid.shape, self.floor_value)
        for s, E in zip(self.levels, self.sets):
            values[E.membership] = s
        return LevelFunction(self.grid, values, self.floor_value, self.ceil_value, self.outside)

    def __str__(self):
        return "LevelStack (%d levels in (%r, %r])" % (len(self.levels), self.floor_value, self.ceil_value)

    def __repr__(self):
        return self.__str__()


def uniform_levels(floor_value, ceil_value, L):
    gap = (ceil_value - floor_value) / float(L)
    return [floor_value + i * gap for i in range(1, L + 1)]


def decompose(u, L):
    """return the LevelStack of u on L uniform levels over (floor, ceil]"""
    if int(L) < 2:
        raise MMFlowError("decompose needs at least 2 levels (got %s)" % L)
    levels = uniform_levels(u.floor_value, u.ceil_value, int(L))
    return LevelStack(levels, [u.superlevel(s) for s in levels], u.floor_value, u.ceil_value, u.outside)


def lift_step(u, ctx, k, L=None, choice=None):
    """
    One step of the level operator: evolve every superlevel set of u and reconstruct.

    u (LevelFunction):      the current function, constant on the margin band
    ctx (FlowContext):      models and scheme parameters; ctx.threads workers solve levels
    k (int):                step index
    L (int):                level count, ctx.params.level_count by default
    choice (String):        minimizer per level, ctx.params.minimizer_choice by default

    Raises NestingViolation when the evolved sets are not nested.
    """
    L = L or ctx.params.level_count
    choice = choice or ctx.params.minimizer_choice
    margin = ctx.params.margin
    if not u.respects_margin(margin):
        raise MMFlowError("level function is not constant on the margin band")
    stack = decompose(u, L)

    def evolve_level(item):
        s, E = item
        return atw_step(E, Phase.of(E, margin), ctx, k, choice, level=s)

    items = list(zip(stack.levels, stack.sets))
    if ctx.threads > 1:
        with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
            evolved = list(pool.map(evolve_level, items))
    else:
        evolved = [evolve_level(item) for item in items]
    result = LevelStack(stack.levels, evolved, u.floor_value, u.ceil_value, u.outside)
    broken = result.first_nesting_failure()
    if broken is not None:
        raise NestingViolation("evolved superlevel sets are not nested", step=k, level=broken)
    return result.reconstruct()


###
#  EvolutionRecord
##
@six.python_2_unicode_compatible
class EvolutionRecord(object):
    """
    times ([float]):                    snapshot times, spacing stride * h
    snapshots ([LevelFunction]):        the function at each time
    per_step_displacement ([float]):    per step, max over levels of the interface displacement
    levels ([float]):                   the levels the evolution was lifted on
    h (float):                          time step
    """

    def __init__(self, times, snapshots, per_step_displacement, levels, h):
        self.times = times
        self.snapshots = snapshots
        self.per_step_displacement = per_step_displacement
        self.levels = levels
        self.h = h

    def __str__(self):
        return "EvolutionRecord (%d snapshots to t=%r)" % (len(self.snapshots), self.times[-1])

    def __repr__(self):
        return self.__str__()


def evolve(u0, ctx, T=None, stride=1, choice=None):
    """
    Iterate lift_step from u0 over [0, T] (ctx.params.T by default).

    Snapshots are kept every stride steps; displacement is recorded every step.
    """
    T = ctx.params.T if T is None else T
    h = ctx.h
    if not T >= h:
        raise MMFlowError("evolve needs T >= h (got T=%r, h=%r)" % (T, h))
    steps = int(round(T / h))
    L = ctx.params.level_count
    levels = uniform_levels(u0.floor_value, u0.ceil_value, L)
    times, snapshots, displacement = [0.0], [u0], []
    u = u0
    for k in range(steps):
        u_next = lift_step(u, ctx, k, L, choice)
        displacement.append(max(interface_displacement(u.superlevel(s), u_next.superlevel(s)) for s in levels))
        u = u_next
        if (k + 1) % stride == 0:
            times.append((k + 1) * h)
            snapshots.append(u)
        logger.info("step %d of %d: displacement %.6g" % (k + 1, steps, displacement[-1]))
    return EvolutionRecord(times, snapshots, displacement, levels, h)


###
#  checks
##
def _separation(u, s, s_high):
    """Euclidean distance in cells from {u >= s_high} to the complement of {u >= s}, inf if vacuous"""
    upper = u.values >= s_high
    lower = u.values >= s
    if not upper.any() or lower.all():
        return float('inf')
    return float(ndimage.distance_transform_edt(lower)[upper].min())


def modulus_check(u0, record, level_samples=8):
    """
    Check that the evolution keeps the spatial modulus of continuity of u0.

    For sampled level pairs s < s', the distance from {u >= s'} to the complement of
    {u >= s} must not shrink below its initial value by more than one cell.
    Returns a ModulusReport, violation in cells.
    """
    levels = record.levels
    picks = sorted(set(np.linspace(0, len(levels) - 1, min(level_samples, len(levels))).round().astype(int)))
    pairs = [(levels[i], levels[j]) for a, i in enumerate(picks) for j in picks[a + 1:]]
    worst = 0.0
    checked = 0
    for s, s_high in pairs:
        initial = _separation(u0, s, s_high)
        if initial == float('inf'):
            continue
        for u in record.snapshots:
            current = _separation(u, s, s_high)
            worst = max(worst, initial - current)
            checked += 1
    return ModulusReport(worst, checked, worst <= MODULUS_SLACK)


def h_refinement_study(u0, ctx, h_list, T=None):
    """
    Run evolve for each h on the same grid and return [(h, gap)] where gap is the sup
    over times sampled at multiples of the coarsest h of the sup-norm difference to the
    finest run.
    """
    T = ctx.params.T if T is None else T
    h_list = list(h_list)
    if len(h_list) < 3:
        raise MMFlowError("h_refinement_study needs at least 3 time steps")
    if any(b >= a for a, b in zip(h_list[:-1], h_list[1:])):
        raise MMFlowError("h_refinement_study needs decreasing time steps")
    for h in h_list:
        if abs(T / h - round(T / h)) > 1e-9 * (T / h):
            raise MMFlowError("time step %r does not divide T=%r" % (h, T))
    coarse = h_list[0]
    runs = []
    for h in h_list:
        sub = ctx.replace(params=ctx.params.replace(h=h, T=T))
        stride = int(round(coarse / h))
        runs.append(evolve(u0, sub, T, stride=stride))
        logger.info("refinement run h=%r done" % h)
    finest = runs[-1]
    study = []
    for h, run in zip(h_list, runs):
        gap = max(float(np.max(np.abs(a.values - b.values))) for a, b in zip(run.snapshots, finest.snapshots))
        study.append((h, gap))
    return study


def gaps_nonincreasing(study):
    gaps = [gap for _, gap in study]
    return all(b <= a for a, b in zip(gaps[:-1], gaps[1:]))


def level_tracking_check(u0, ctx, steps, levels=None, choice=None):
    """
    Compare k-fold set evolution of {u0 >= s} with the level-s set after k lift steps.

    Returns a LevelTrackingReport: [(level, step, mismatching cells)] and whether every
    count is zero.
    """
    choice = choice or ctx.params.minimizer_choice
    margin = ctx.params.margin
    all_levels = uniform_levels(u0.floor_value, u0.ceil_value, ctx.params.level_count)
    levels = all_levels if levels is None else list(levels)
    sets = dict((s, u0.superlevel(s)) for s in levels)
    u = u0
    mismatches = []
    for k in range(steps):
        u = lift_step(u, ctx, k, choice=choice)
        for s in levels:
            E = sets[s]
            sets[s] = atw_step(E, Phase.of(E, margin), ctx, k, choice, level=s)
            mismatches.append((s, k + 1, sets[s].symmetric_difference(u.superlevel(s)).count()))
    return LevelTrackingReport(mismatches, all(count == 0 for _, _, count in mismatches))


def fattening_report(u0, ctx, T=None):
    """return [(t, cells where the minimal and maximal liftings differ)]"""
    low = evolve(u0, ctx, T, choice=MINIMAL)
    high = evolve(u0, ctx, T, choice=MAXIMAL)
    return [(t, int(np.count_nonzero(a.values != b.values)))
            for t, a, b in zip(low.times, low.snapshots, high.snapshots)]


def operator_law_check(u, v, ctx, k, shift, constant):
    """
    Check the level operator on one pair u <= v: monotone, commutes with the constant
    (level-aligned) and equivariant under the lattice shift.
    """
    if np.any(u.values > v.values):
        raise MMFlowError("operator_law_check needs u <= v cellwise")
    Tu = lift_step(u, ctx, k)
    Tv = lift_step(v, ctx, k)
    monotone = bool(np.all(Tu.values <= Tv.values))
    commutes = lift_step(u.add_constant(constant), ctx, k) == Tu.add_constant(constant)
    equivariant = lift_step(u.shift(shift), ctx, k) == Tu.shift(shift)
    return OperatorLawReport(monotone, commutes, equivariant)
