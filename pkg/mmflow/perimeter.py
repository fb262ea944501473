"""
mmflow perimeters

Generalized perimeters as pairwise submodular interaction weights on the grid:
a local Crofton-weighted perimeter and a truncated fractional kernel, with the
coarea extension and the probe-based curvature diagnostics.

Copyright (C) 2026 mmflow developers
"""

import logging
import math

import numpy as np
import six
from scipy import integrate
from tabulate import tabulate

from .common import ConfigError, MMFlowError
from .core import CellSet

logger = logging.getLogger(__name__)


CROFTON = "crofton"
FRACTIONAL = "fractional"

OUTER = "outer"
INNER = "inner"

# (Outer + Inner) / 2 of disk probes on a smooth interface tends to this multiple of the curvature
PROBE_CENTRAL_FACTOR = 2.0 * (math.pi + 4.0) / (3.0 * math.pi ** 2)


def _symmetric_family(offsets):
    """close a list of offsets under negation and coordinate swap"""
    family = set()
    for (i, j) in offsets:
        for (p, q) in ((i, j), (j, i)):
            for (si, sj) in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                family.add((si * p, sj * q))
    return sorted(family)


def crofton_weights(neighborhood):
    """
    return the [(offset, weight)] table of the local Crofton perimeter

    8 neighbors: flat interfaces along the axes and diagonals have exact length.
    16 neighbors: axes, diagonals and the mean width over all directions are exact.
    """
    axis = _symmetric_family([(1, 0)])
    diagonal = _symmetric_family([(1, 1)])
    if neighborhood == 8:
        w_d = 1.0 - 1.0 / math.sqrt(2.0)
        w_a = math.sqrt(2.0) - 1.0
        families = [(axis, w_a), (diagonal, w_d)]
    elif neighborhood == 16:
        knight = _symmetric_family([(1, 2)])
        system = np.array([[1.0, 2.0, 6.0],
                           [math.sqrt(2.0), math.sqrt(2.0), 4.0 * math.sqrt(2.0)],
                           [4.0 / math.pi, 4.0 * math.sqrt(2.0) / math.pi, 8.0 * math.sqrt(5.0) / math.pi]])
        w_a, w_d, w_k = np.linalg.solve(system, np.ones(3))
        families = [(axis, w_a), (diagonal, w_d), (knight, w_k)]
    else:
        raise ConfigError("perimeter.neighborhood: must be 8 or 16 (got %s)" % neighborhood)
    return [(o, float(w)) for offsets, w in families for o in offsets]


def fractional_tail_factor(s, cutoff_radius, dx):
    """
    factor lambda matching the flat-interface moment of the truncated lattice kernel
    to the continuum kernel on the annulus dx/2 <= |z| <= cutoff_radius*dx
    """
    continuum = integrate.quad(lambda r: 2.0 * r ** (-2.0 * s), 0.5 * dx, cutoff_radius * dx)[0]
    lattice = 0.0
    for (i, j) in _fractional_offsets(cutoff_radius):
        if i > 0:
            lattice += i * dx ** 3 / (math.hypot(i, j) * dx) ** (2.0 + 2.0 * s)
    return continuum / lattice


def _fractional_offsets(cutoff_radius):
    r = int(cutoff_radius)
    return [(i, j) for i in range(-r, r + 1) for j in range(-r, r + 1)
            if (i, j) != (0, 0) and i * i + j * j <= r * r]


def _windows(shape, o):
    """slices (a, b) such that array[a] pairs with array[b] = the cells displaced by o"""
    di, dj = o
    nx, ny = shape
    a = (slice(max(0, -di), nx - max(0, di)), slice(max(0, -dj), ny - max(0, dj)))
    b = (slice(max(0, di), nx - max(0, -di)), slice(max(0, dj), ny - max(0, -dj)))
    return a, b


###
#  PerimeterModel
##
@six.python_2_unicode_compatible
class PerimeterModel(object):
    """
    A generalized perimeter J as nonnegative weights on lattice offsets.

    kind (String):              "crofton" or "fractional"
    weights ([(offset, w)]):    one entry per offset, closed under negation
    neighborhood (int):         8 or 16 for crofton
    s (float):                  fractional exponent in (0, 1)
    cutoff_radius (int):        fractional truncation radius in cells
    dx (float):                 cell width the fractional weights were built for

    J(E) = sum over (o, w) of w * dx * #{i in E : i + o in grid, i + o not in E}
    """

    def __init__(self, kind, weights, neighborhood=None, s=None, cutoff_radius=None, dx=None, tail_factor=None):
        for o, w in weights:
            if w < 0:
                raise ConfigError("perimeter: negative weight %r at offset %s" % (w, o))
        table = dict(weights)
        for o in table:
            if table.get((-o[0], -o[1])) != table[o]:
                raise ConfigError("perimeter: weights not symmetric under negation at offset %s" % (o,))
        self.kind = kind
        self.weights = list(weights)
        self.neighborhood = neighborhood
        self.s = s
        self.cutoff_radius = cutoff_radius
        self.dx = dx
        self.tail_factor = tail_factor

    @classmethod
    def crofton(cls, neighborhood=16):
        return cls(CROFTON, crofton_weights(neighborhood), neighborhood=neighborhood)

    @classmethod
    def fractional(cls, s, cutoff_radius, dx):
        """truncated kernel |x - y|^-(2 + 2s) sampled at offsets within cutoff_radius cells"""
        errors = []
        if not 0.0 < float(s) < 1.0:
            errors.append("perimeter.s: must lie in (0, 1) (got %s)" % s)
        if int(cutoff_radius) < 1:
            errors.append("perimeter.cutoff: must be at least 1 cell (got %s)" % cutoff_radius)
        if errors:
            raise ConfigError(errors)
        s = float(s)
        cutoff_radius = int(cutoff_radius)
        lam = fractional_tail_factor(s, cutoff_radius, dx)
        weights = [((i, j), lam * dx ** 3 / (math.hypot(i, j) * dx) ** (2.0 + 2.0 * s))
                   for (i, j) in _fractional_offsets(cutoff_radius)]
        logger.debug("fractional kernel s=%r cutoff=%d: %d offsets, tail factor %.6g" %
                     (s, cutoff_radius, len(weights), lam))
        return cls(FRACTIONAL, weights, s=s, cutoff_radius=cutoff_radius, dx=dx, tail_factor=lam)

    @property
    def reach(self):
        """largest offset component, the graph stencil radius"""
        return max(max(abs(o[0]), abs(o[1])) for o, _ in self.weights)

    def weight_table(self):
        """return the weight table as a printable string"""
        data = [['offset_x', 'offset_y', 'weight']]
        data.extend([o[0], o[1], w] for o, w in self.weights)
        return tabulate(data, headers='firstrow', floatfmt='.12g')

    def export_weights(self, path):
        """write the weight table as CSV (offset_x, offset_y, weight)"""
        rows = np.array([[o[0], o[1], w] for o, w in self.weights], dtype=float)
        np.savetxt(path, rows, delimiter=',', fmt=['%d', '%d', '%.17g'],
                   header='offset_x,offset_y,weight', comments='')
        logger.info("wrote %d perimeter weights to %s" % (len(rows), path))

    def __str__(self):
        if self.kind == CROFTON:
            return "crofton(%d)" % self.neighborhood
        return "fractional(s=%r, cutoff=%d)" % (self.s, self.cutoff_radius)

    def __repr__(self):
        return "PerimeterModel(%s)" % self


def perimeter_energy(J, E):
    """return J(E); zero for the empty set and for the full grid"""
    m = E.membership
    dx = E.grid.dx
    total = 0.0
    for o, w in J.weights:
        a, b = _windows(m.shape, o)
        total += w * dx * np.count_nonzero(m[a] & ~m[b])
    return total


def submodularity_check(J, E, F):
    """return whether J(E & F) + J(E | F) <= J(E) + J(F) + 1e-9"""
    lhs = perimeter_energy(J, E.intersection(F)) + perimeter_energy(J, E.union(F))
    return lhs <= perimeter_energy(J, E) + perimeter_energy(J, F) + 1e-9


def weighted_total_variation(J, u):
    """return sum over (o, w) of w * dx * sum_i (u(i) - u(i + o))_+, the discrete J(u)"""
    v = u.values
    total = 0.0
    for o, w in J.weights:
        a, b = _windows(v.shape, o)
        total += w * u.grid.dx * np.maximum(v[a] - v[b], 0.0).sum()
    return total


def coarea_energy(J, u, levels):
    """
    return sum_i J({u >= s_i}) * (s_i - s_(i-1)) over the sorted levels

    With every distinct value of u as a level this is weighted_total_variation(J, u).
    """
    levels = np.asarray(levels, dtype=float)
    if np.any(np.diff(levels) < 0):
        raise MMFlowError("coarea_energy: levels must be sorted")
    total = 0.0
    for previous, s in zip(levels[:-1], levels[1:]):
        total += perimeter_energy(J, u.superlevel(s)) * (s - previous)
    return total


###
#  curvature probes
##
@six.python_2_unicode_compatible
class CurvatureProbe(object):
    """
    center ((int, int)):    boundary cell the probe disks are centered on
    radii ([float]):        strictly increasing probe radii in cells, the smallest at least 1
    """

    def __init__(self, center, radii):
        radii = [float(r) for r in radii]
        if not radii or radii[0] < 1 or any(r1 <= r0 for r0, r1 in zip(radii[:-1], radii[1:])):
            raise MMFlowError("probe radii must be strictly increasing and at least 1 (got %s)" % radii)
        self.center = (int(center[0]), int(center[1]))
        self.radii = radii

    def disk(self, grid, radius):
        ii, jj = np.meshgrid(np.arange(grid.nx), np.arange(grid.ny), indexing='ij')
        return CellSet(grid, (ii - self.center[0]) ** 2 + (jj - self.center[1]) ** 2 <= radius ** 2)

    def __str__(self):
        return "probe at %s radii %s" % (self.center, self.radii)

    def __repr__(self):
        return self.__str__()


def estimate_curvature(J, E, probe, side=OUTER):
    """
    Difference quotients of J against probe disks W at a boundary cell.

    J (PerimeterModel):         the perimeter
    E (CellSet):                the set, probe.center on its discrete boundary
    probe (CurvatureProbe):     the disks
    side (String):              "outer": (J(E | W) - J(E)) / |W \\ E|
                                "inner": (J(E) - J(E \\ W)) / |W & E|

    Returns [(radius, value)]; value is None for a radius whose quotient has an
    empty denominator.
    """
    if side not in (OUTER, INNER):
        raise MMFlowError("unknown probe side %r" % side)
    if not (E.boundary().contains(probe.center) or E.complement().boundary().contains(probe.center)):
        raise MMFlowError("probe center %s is not on the boundary of %s" % (probe.center, E))
    cell_area = E.grid.dx ** 2
    base = perimeter_energy(J, E)
    quotients = []
    for radius in probe.radii:
        W = probe.disk(E.grid, radius)
        if side == OUTER:
            added = W.difference(E).count()
            if added == 0:
                logger.info("outer probe radius %r skipped: disk inside the set" % radius)
                quotients.append((radius, None))
                continue
            value = (perimeter_energy(J, E.union(W)) - base) / (added * cell_area)
        else:
            removed = W.intersection(E).count()
            if removed == 0:
                logger.info("inner probe radius %r skipped: disk outside the set" % radius)
                quotients.append((radius, None))
                continue
            value = (base - perimeter_energy(J, E.difference(W))) / (removed * cell_area)
        quotients.append((radius, value))
    return quotients


def curvature_bracket(J, E, probe):
    """
    return [(radius, outer, inner, central)] where central rescales the mean of the
    two quotients to a curvature estimate; entries with a skipped side carry None
    """
    bracket = []
    for (radius, outer), (_, inner) in zip(estimate_curvature(J, E, probe, OUTER),
                                           estimate_curvature(J, E, probe, INNER)):
        central = None
        if outer is not None and inner is not None:
            central = 0.5 * (outer + inner) / PROBE_CENTRAL_FACTOR
        bracket.append((radius, outer, inner, central))
    return bracket


def ball_curvature_envelope(J, rho):
    """
    return (cbar, cunder), the extreme curvatures of a disk of radius rho

    Classical perimeter: both are 1/rho. Fractional kernel: the truncated kernel
    integrated against the disk boundary point, by radial quadrature.
    """
    if not rho > 0:
        raise MMFlowError("ball_curvature_envelope: radius must be positive (got %r)" % rho)
    if J.kind == CROFTON:
        return (1.0 / rho, 1.0 / rho)
    s = J.s
    inner = 0.5 * J.dx
    outer = J.cutoff_radius * J.dx

    def integrand(r):
        inside = 2.0 * r * math.acos(min(1.0, r / (2.0 * rho)))
        return (2.0 * math.pi * r - 2.0 * inside) * r ** (-2.0 - 2.0 * s)

    breaks = [2.0 * rho] if inner < 2.0 * rho < outer else None
    value = integrate.quad(integrand, inner, outer, points=breaks, epsrel=1e-8, limit=200)[0]
    c = J.tail_factor * value
    return (c, c)
