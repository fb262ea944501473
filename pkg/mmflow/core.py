"""
mmflow core types

Grids, cell sets, level functions, anisotropies, nonlinearities, forcing terms
and the scheme parameters shared by every other module.

Copyright (C) 2026 mmflow developers
"""

import logging
import math

import numpy as np
import six
from scipy import integrate

from .common import ConfigError, MMFlowError

logger = logging.getLogger(__name__)


BOUNDED_SET = "bounded"
BOUNDED_COMPLEMENT = "complement"

MINIMAL = "minimal"
MAXIMAL = "maximal"

EUCLIDEAN = "euclidean"
MAX_NORM = "maxnorm"
WEIGHTED_EUCLIDEAN = "weighted"

IDENTITY = "identity"
CLAMP = "clamp"
POWER = "power"
NEGATIVE_PART = "negative_part"
PIECEWISE = "piecewise"

ZERO = "zero"
CONSTANT = "constant"
SAMPLED = "sampled"

BISECTION_TOLERANCE = 1e-9


def shift_array(values, v, fill):
    """
    return a copy of a 2D array translated by the lattice vector v = (di, dj),
    cells uncovered by the translation take the value fill
    """
    di, dj = int(v[0]), int(v[1])
    nx, ny = values.shape
    out = np.full(values.shape, fill, dtype=values.dtype)
    if abs(di) >= nx or abs(dj) >= ny:
        return out
    src_i = slice(max(0, -di), nx - max(0, di))
    dst_i = slice(max(0, di), nx - max(0, -di))
    src_j = slice(max(0, -dj), ny - max(0, dj))
    dst_j = slice(max(0, dj), ny - max(0, -dj))
    out[dst_i, dst_j] = values[src_i, src_j]
    return out


###
#  Grid
##
@six.python_2_unicode_compatible
class Grid(object):
    """
    A finite 2D lattice of nx by ny square cells.

    nx, ny (int):              cell counts, each at least 4
    dx (float):                cell width in length units
    origin ((float, float)):   world coordinate of the center of cell (0, 0)

    Cell (i, j) has world coordinate origin + (i*dx, j*dx).
    """

    def __init__(self, nx, ny, dx, origin=(0.0, 0.0)):
        if int(nx) < 4 or int(ny) < 4:
            raise ConfigError("grid.nx, grid.ny: need at least 4 cells per axis (got %s x %s)" % (nx, ny))
        if not float(dx) > 0:
            raise ConfigError("grid.dx: must be positive (got %s)" % dx)
        self.nx = int(nx)
        self.ny = int(ny)
        self.dx = float(dx)
        self.origin = (float(origin[0]), float(origin[1]))

    @classmethod
    def centered(cls, nx, ny, dx):
        """return a Grid whose cell centers are symmetric about the world origin"""
        return cls(nx, ny, dx, origin=(-0.5 * (nx - 1) * dx, -0.5 * (ny - 1) * dx))

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def size(self):
        return self.nx * self.ny

    def coordinates(self):
        """return the world coordinate arrays X, Y of every cell center, indexed [i, j]"""
        xs = self.origin[0] + self.dx * np.arange(self.nx)
        ys = self.origin[1] + self.dx * np.arange(self.ny)
        return np.meshgrid(xs, ys, indexing='ij')

    def cell_center(self, cell):
        return (self.origin[0] + cell[0] * self.dx, self.origin[1] + cell[1] * self.dx)

    def nearest_cell(self, point):
        i = int(round((point[0] - self.origin[0]) / self.dx))
        j = int(round((point[1] - self.origin[1]) / self.dx))
        return (min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1))

    def margin_mask(self, margin):
        """return a boolean array marking the cells within margin cells of the grid edge"""
        mask = np.zeros(self.shape, dtype=bool)
        m = int(margin)
        if m > 0:
            mask[:m, :] = True
            mask[-m:, :] = True
            mask[:, :m] = True
            mask[:, -m:] = True
        return mask

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (self.nx, self.ny, self.dx, self.origin) == (other.nx, other.ny, other.dx, other.origin)

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def __hash__(self):
        return hash((self.nx, self.ny, self.dx, self.origin))

    def __str__(self):
        return "%dx%d (dx=%r)" % (self.nx, self.ny, self.dx)

    def __repr__(self):
        return self.__str__()


###
#  CellSet
##
@six.python_2_unicode_compatible
class CellSet(object):
    """
    A subset of the cells of a Grid, one membership bit per cell.

    CellSets are immutable; every set operation returns a new CellSet.
    """

    def __init__(self, grid, membership):
        m = np.array(membership, dtype=bool)
        if m.shape != grid.shape:
            raise MMFlowError("membership shape %s does not match grid %s" % (m.shape, grid))
        m.flags.writeable = False
        self.grid = grid
        self.membership = m

    ##
    #  constructors
    ##
    @classmethod
    def empty(cls, grid):
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    @classmethod
    def full(cls, grid):
        return cls(grid, np.ones(grid.shape, dtype=bool))

    @classmethod
    def disk(cls, grid, center, radius):
        """cells whose centers lie within Euclidean distance radius of center (world units)"""
        X, Y = grid.coordinates()
        return cls(grid, (X - center[0]) ** 2 + (Y - center[1]) ** 2 <= radius ** 2)

    @classmethod
    def rectangle(cls, grid, lower, upper):
        """cells whose centers lie in the closed box [lower, upper] (world units)"""
        X, Y = grid.coordinates()
        return cls(grid, (X >= lower[0]) & (X <= upper[0]) & (Y >= lower[1]) & (Y <= upper[1]))

    ##
    #  queries
    ##
    def count(self):
        return int(self.membership.sum())

    def area(self):
        return self.count() * self.grid.dx ** 2

    def is_empty(self):
        return not self.membership.any()

    def is_full(self):
        return bool(self.membership.all())

    def contains(self, cell):
        return bool(self.membership[cell[0], cell[1]])

    def issubset(self, other):
        self._check_grid(other)
        return not np.any(self.membership & ~other.membership)

    def touches_margin(self, margin):
        return bool(np.any(self.membership & self.grid.margin_mask(margin)))

    def boundary(self):
        """cells of the set having a 4-neighbor in the grid that is not in the set"""
        m = self.membership
        outside = np.zeros(m.shape, dtype=bool)
        outside[1:, :] |= ~m[:-1, :]
        outside[:-1, :] |= ~m[1:, :]
        outside[:, 1:] |= ~m[:, :-1]
        outside[:, :-1] |= ~m[:, 1:]
        return CellSet(self.grid, m & outside)

    ##
    #  set algebra
    ##
    def complement(self):
        return CellSet(self.grid, ~self.membership)

    def union(self, other):
        self._check_grid(other)
        return CellSet(self.grid, self.membership | other.membership)

    def intersection(self, other):
        self._check_grid(other)
        return CellSet(self.grid, self.membership & other.membership)

    def difference(self, other):
        self._check_grid(other)
        return CellSet(self.grid, self.membership & ~other.membership)

    def symmetric_difference(self, other):
        self._check_grid(other)
        return CellSet(self.grid, self.membership ^ other.membership)

    def shift(self, v, fill=False):
        """
        translate the set by the lattice vector v

        Cells translated off the grid are an error; cells uncovered along the
        opposite edge take the value fill.
        """
        leaving = ~shift_array(np.ones(self.grid.shape, dtype=bool), (-int(v[0]), -int(v[1])), False)
        if np.any(self.membership[leaving] != fill):
            raise MMFlowError("shift by %s moves cells off the grid" % (tuple(v),))
        return CellSet(self.grid, shift_array(self.membership, v, fill))

    def _check_grid(self, other):
        if other.grid != self.grid:
            raise MMFlowError("cell sets live on different grids (%s, %s)" % (self.grid, other.grid))

    def __eq__(self, other):
        if not isinstance(other, CellSet):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.membership, other.membership)

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    __hash__ = None

    def __str__(self):
        return "CellSet (%d cells on %s)" % (self.count(), self.grid)

    def __repr__(self):
        return self.__str__()


###
#  Phase
##
@six.python_2_unicode_compatible
class Phase(object):
    """
    The class of a set: bounded, or the complement of a bounded set.

    BoundedComplement sets are stored as their (bounded) complement.
    """

    def __init__(self, kind=BOUNDED_SET):
        if kind not in (BOUNDED_SET, BOUNDED_COMPLEMENT):
            raise ConfigError("phase: unknown kind %r" % kind)
        self.kind = kind

    @classmethod
    def of(cls, E, margin):
        """return the phase of E: BoundedComplement if E covers the margin band, BoundedSet otherwise"""
        if np.all(E.membership[E.grid.margin_mask(margin)]):
            return cls(BOUNDED_COMPLEMENT)
        return cls(BOUNDED_SET)

    @property
    def is_complement(self):
        return self.kind == BOUNDED_COMPLEMENT

    def stored(self, E):
        """return the bounded CellSet that represents E in this phase"""
        return E.complement() if self.is_complement else E

    def restore(self, stored):
        """inverse of stored"""
        return stored.complement() if self.is_complement else stored

    def __eq__(self, other):
        return isinstance(other, Phase) and self.kind == other.kind

    def __ne__(self, other):
        return not self.__eq__(other)

    __hash__ = None

    def __str__(self):
        return self.kind

    def __repr__(self):
        return "Phase(%r)" % self.kind


###
#  LevelFunction
##
@six.python_2_unicode_compatible
class LevelFunction(object):
    """
    A scalar field u on a Grid, constant outside an active region.

    grid (Grid):              the grid
    values (ndarray):         one real per cell, each in [floor_value, ceil_value]
    floor_value (float):      lower bound of u
    ceil_value (float):       upper bound of u
    outside (float):          the constant u takes on the margin band, floor_value unless given
    """

    def __init__(self, grid, values, floor_value, ceil_value, outside=None):
        v = np.array(values, dtype=float)
        if v.shape != grid.shape:
            raise MMFlowError("values shape %s does not match grid %s" % (v.shape, grid))
        if not floor_value < ceil_value:
            raise MMFlowError("floor_value %r must be below ceil_value %r" % (floor_value, ceil_value))
        if v.min() < floor_value or v.max() > ceil_value:
            raise MMFlowError("values leave [%r, %r]" % (floor_value, ceil_value))
        if outside is None:
            outside = floor_value
        if outside not in (floor_value, ceil_value):
            raise MMFlowError("outside constant must be floor_value or ceil_value")
        v.flags.writeable = False
        self.grid = grid
        self.values = v
        self.floor_value = float(floor_value)
        self.ceil_value = float(ceil_value)
        self.outside = float(outside)

    @classmethod
    def cone(cls, grid, center, radius, floor_value, ceil_value):
        """u = radius - |x - center| clipped to [floor_value, ceil_value]: every superlevel is a disk"""
        X, Y = grid.coordinates()
        u = radius - np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2)
        return cls(grid, np.clip(u, floor_value, ceil_value), floor_value, ceil_value)

    @classmethod
    def characteristic(cls, E, floor_value=0.0, ceil_value=1.0):
        return cls(E.grid, np.where(E.membership, ceil_value, floor_value), floor_value, ceil_value)

    def respects_margin(self, margin):
        return bool(np.all(self.values[self.grid.margin_mask(margin)] == self.outside))

    def superlevel(self, s):
        return CellSet(self.grid, self.values >= s)

    def shift(self, v):
        return LevelFunction(self.grid, shift_array(self.values, v, self.outside),
                             self.floor_value, self.ceil_value, self.outside)

    def add_constant(self, c):
        return LevelFunction(self.grid, self.values + c, self.floor_value + c, self.ceil_value + c,
                             self.outside + c)

    def __eq__(self, other):
        if not isinstance(other, LevelFunction):
            return NotImplemented
        return (self.grid == other.grid and np.array_equal(self.values, other.values) and
                (self.floor_value, self.ceil_value, self.outside) ==
                (other.floor_value, other.ceil_value, other.outside))

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    __hash__ = None

    def __str__(self):
        return "LevelFunction ([%r, %r] on %s)" % (self.floor_value, self.ceil_value, self.grid)

    def __repr__(self):
        return self.__str__()


###
#  Anisotropy
##
@six.python_2_unicode_compatible
class Anisotropy(object):
    """
    An even, convex, positively 1-homogeneous mobility psi.

    kind (String):              "euclidean", "maxnorm" (psi = max norm, polar = l1 norm)
                                or "weighted" (psi(p) = sqrt(w1 p1^2 + w2 p2^2))
    weights ((float, float)):   diagonal weights, required for "weighted"

    c_psi is the tightest constant with |p|/c_psi <= psi(p) <= c_psi |p|.
    """

    def __init__(self, kind=EUCLIDEAN, weights=None):
        if kind == EUCLIDEAN:
            self.c_psi = 1.0
        elif kind == MAX_NORM:
            self.c_psi = math.sqrt(2.0)
        elif kind == WEIGHTED_EUCLIDEAN:
            if weights is None or len(weights) != 2 or min(weights) <= 0:
                raise ConfigError("anisotropy.weights: two positive weights required for weighted kind")
            weights = (float(weights[0]), float(weights[1]))
            self.c_psi = max(math.sqrt(max(weights)), 1.0 / math.sqrt(min(weights)))
        else:
            raise ConfigError("anisotropy.kind: unknown kind %r" % kind)
        self.kind = kind
        self.weights = weights

    def psi(self, p):
        """evaluate psi on the last axis of p"""
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        if self.kind == EUCLIDEAN:
            return np.hypot(x, y)
        if self.kind == MAX_NORM:
            return np.maximum(np.abs(x), np.abs(y))
        return np.sqrt(self.weights[0] * x * x + self.weights[1] * y * y)

    def polar(self, v):
        """evaluate the polar function psi° = sup{xi.v : psi(xi) <= 1} on the last axis of v"""
        v = np.asarray(v, dtype=float)
        x, y = v[..., 0], v[..., 1]
        if self.kind == EUCLIDEAN:
            return np.hypot(x, y)
        if self.kind == MAX_NORM:
            return np.abs(x) + np.abs(y)
        return np.sqrt(x * x / self.weights[0] + y * y / self.weights[1])

    def unit_ball_boundary(self, samples=3600):
        """return points xi(theta) with psi(xi) = 1 on an angular sweep"""
        theta = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
        directions = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return directions / self.psi(directions)[:, None]

    def __str__(self):
        if self.kind == WEIGHTED_EUCLIDEAN:
            return "%s%s" % (self.kind, self.weights)
        return self.kind

    def __repr__(self):
        return "Anisotropy(%s, c_psi=%r)" % (self, self.c_psi)


def psi_eval(a, p):
    """return psi(p) >= 0, zero only at p = 0"""
    return float(a.psi(p))


def psi_polar(a, v):
    """return psi°(v) = sup{xi.v : psi(xi) <= 1}"""
    return float(a.polar(v))


def psi_polar_sweep(a, v, samples=3600):
    """psi°(v) by maximizing xi.v over an angular sweep of the unit ball of psi"""
    return float(np.max(a.unit_ball_boundary(samples).dot(np.asarray(v, dtype=float))))


###
#  Nonlinearity
##
@six.python_2_unicode_compatible
class Nonlinearity(object):
    """
    A continuous non-decreasing speed law G with G(0) = 0, its saturation limits
    a = -lim G(s) at -inf and b = lim G(s) at +inf, and the inverse selection g.

    kind (String):        "identity", "clamp" (needs M), "power" (needs gamma,
                          G(s) = sign(s)|s|^gamma), "negative_part" (G(s) = min(s, 0))
                          or "piecewise" (needs table)
    M (float):            clamp level
    gamma (float):        power exponent
    table ([(x, G)]):     breakpoints, x strictly increasing, G non-decreasing and
                          through (0, 0); linear between breakpoints, constant beyond
    reflected (Boolean):  evaluate G~(s) = -G(-s) instead of G
    """

    def __init__(self, kind=IDENTITY, M=None, gamma=None, table=None, reflected=False):
        if kind == IDENTITY:
            a = b = float('inf')
        elif kind == CLAMP:
            if M is None:
                raise ConfigError("nonlinearity.M: required for clamp")
            if not float(M) > 0:
                raise ConfigError("nonlinearity.M: must be positive (got %s)" % M)
            M = float(M)
            a = b = M
        elif kind == POWER:
            if gamma is None:
                raise ConfigError("nonlinearity.gamma: required for power")
            if not float(gamma) > 0:
                raise ConfigError("nonlinearity.gamma: must be positive (got %s)" % gamma)
            gamma = float(gamma)
            a = b = float('inf')
        elif kind == NEGATIVE_PART:
            a, b = float('inf'), 0.0
        elif kind == PIECEWISE:
            table = self._check_table(table)
            a, b = -table[1][0], table[1][-1]
        else:
            raise ConfigError("nonlinearity.kind: unknown kind %r" % kind)
        self.kind = kind
        self.M = M
        self.gamma = gamma
        self.table = table
        self.reflected = bool(reflected)
        self._a, self._b = a, b

    @staticmethod
    def _check_table(table):
        if table is None or len(table) < 2:
            raise ConfigError("nonlinearity.table: at least two breakpoints required for piecewise")
        xs = np.array([float(x) for x, _ in table])
        gs = np.array([float(g) for _, g in table])
        if np.any(np.diff(xs) <= 0):
            raise ConfigError("nonlinearity.table: breakpoints must be strictly increasing")
        if np.any(np.diff(gs) < 0):
            raise ConfigError("nonlinearity.table: G must be non-decreasing")
        if not xs[0] < 0 < xs[-1] or np.interp(0.0, xs, gs) != 0.0:
            raise ConfigError("nonlinearity.table: G must pass through (0, 0) inside the table")
        return (xs, gs)

    @property
    def a(self):
        return self._b if self.reflected else self._a

    @property
    def b(self):
        return self._a if self.reflected else self._b

    def reflect(self):
        """return the nonlinearity s -> -G(-s) used by the complement duality"""
        return Nonlinearity(self.kind, M=self.M, gamma=self.gamma,
                            table=None if self.table is None else list(zip(*self.table)),
                            reflected=not self.reflected)

    ##
    #  G
    ##
    def G(self, s):
        s = np.asarray(s, dtype=float)
        if self.reflected:
            return -self._G(-s)
        return self._G(s)

    def _G(self, s):
        if self.kind == IDENTITY:
            return s + 0.0
        if self.kind == CLAMP:
            return np.clip(s, -self.M, self.M)
        if self.kind == POWER:
            return np.sign(s) * np.abs(s) ** self.gamma
        if self.kind == NEGATIVE_PART:
            return np.minimum(s, 0.0)
        return np.interp(s, self.table[0], self.table[1])

    ##
    #  g
    ##
    def g(self, s):
        """the inverse selection, extended by -inf on s <= -a and +inf on s >= b"""
        s = np.asarray(s, dtype=float)
        if self.reflected:
            return -self._g(-s)
        return self._g(s)

    def _g(self, s):
        inf = float('inf')
        with np.errstate(invalid='ignore'):
            if self.kind == IDENTITY:
                out = s + 0.0
            elif self.kind == CLAMP:
                out = np.where(s >= self.M, inf, np.where(s <= -self.M, -inf, s))
            elif self.kind == POWER:
                out = np.sign(s) * np.abs(s) ** (1.0 / self.gamma)
            elif self.kind == NEGATIVE_PART:
                out = np.where(s >= 0.0, inf, s)
            else:
                out = self._g_bisect(s)
        return out

    def _g_bisect(self, s):
        """midpoint of {x : G(x) = s} by monotone bisection, for tabulated G"""
        xs, gs = self.table
        s = np.asarray(s, dtype=float)
        inside = (s > gs[0]) & (s < gs[-1])
        target = np.where(inside, s, 0.0)
        # lowest x with G(x) >= s and highest x with G(x) <= s
        lo_a = np.full(s.shape, xs[0])
        hi_a = np.full(s.shape, xs[-1])
        lo_b = lo_a.copy()
        hi_b = hi_a.copy()
        while np.max(hi_a - lo_a, initial=0.0) > BISECTION_TOLERANCE or \
                np.max(hi_b - lo_b, initial=0.0) > BISECTION_TOLERANCE:
            mid_a = 0.5 * (lo_a + hi_a)
            up = np.interp(mid_a, xs, gs) >= target
            hi_a = np.where(up, mid_a, hi_a)
            lo_a = np.where(up, lo_a, mid_a)
            mid_b = 0.5 * (lo_b + hi_b)
            down = np.interp(mid_b, xs, gs) <= target
            lo_b = np.where(down, mid_b, lo_b)
            hi_b = np.where(down, hi_b, mid_b)
        out = 0.5 * (hi_a + lo_b)
        inf = float('inf')
        return np.where(s >= gs[-1], inf, np.where(s <= gs[0], -inf, out))

    def slope(self, lo, hi, samples=257):
        """largest difference quotient of G on [lo, hi]"""
        if hi <= lo:
            hi = lo + 1e-12
        xs = np.linspace(lo, hi, samples)
        return float(np.max(np.abs(np.diff(self.G(xs))) / np.diff(xs)))

    def __str__(self):
        if self.kind == CLAMP:
            text = "clamp(M=%r)" % self.M
        elif self.kind == POWER:
            text = "power(gamma=%r)" % self.gamma
        else:
            text = self.kind
        return ("reflected " + text) if self.reflected else text

    def __repr__(self):
        return "Nonlinearity(%s)" % self


def g_eval(n, s):
    """return g(s) as an extended real"""
    return float(n.g(s))


###
#  Forcing
##
@six.python_2_unicode_compatible
class Forcing(object):
    """
    A bounded continuous forcing term f(t).

    kind (String):        "zero", "constant" (needs value) or "sampled" (needs times, values;
                          piecewise linear, constant beyond the samples)
    """

    def __init__(self, kind=ZERO, value=None, times=None, values=None):
        if kind == ZERO:
            self.bound = 0.0
        elif kind == CONSTANT:
            if value is None:
                raise ConfigError("forcing.value: required for constant forcing")
            value = float(value)
            self.bound = abs(value)
        elif kind == SAMPLED:
            if times is None or values is None or len(times) != len(values) or len(times) < 2:
                raise ConfigError("forcing.times, forcing.values: matching lists of at least two samples required")
            times = np.array(times, dtype=float)
            values = np.array(values, dtype=float)
            if np.any(np.diff(times) <= 0):
                raise ConfigError("forcing.times: must be strictly increasing")
            self.bound = float(np.max(np.abs(values)))
        else:
            raise ConfigError("forcing.kind: unknown kind %r" % kind)
        self.kind = kind
        self.value = value
        self.times = times
        self.values = values

    def __call__(self, t):
        if self.kind == ZERO:
            return np.zeros_like(np.asarray(t, dtype=float))
        if self.kind == CONSTANT:
            return np.full_like(np.asarray(t, dtype=float), self.value)
        return np.interp(t, self.times, self.values)

    def negated(self):
        if self.kind == ZERO:
            return self
        if self.kind == CONSTANT:
            return Forcing(CONSTANT, value=-self.value)
        return Forcing(SAMPLED, times=self.times, values=-self.values)

    def __str__(self):
        if self.kind == CONSTANT:
            return "constant(%r)" % self.value
        if self.kind == SAMPLED:
            return "sampled(%d points)" % len(self.times)
        return self.kind

    def __repr__(self):
        return "Forcing(%s)" % self


def forcing_step_average(f, k, h):
    """
    return (1/h) * integral of f over [k h, (k+1) h]

    Exact for zero and constant forcing; sampled curves use trapezoid sums,
    doubling the panel count until successive sums differ by less than
    1e-10 * f.bound.
    """
    if k < 0 or not h > 0:
        raise MMFlowError("forcing_step_average needs k >= 0 and h > 0 (got k=%r, h=%r)" % (k, h))
    if f.kind == ZERO:
        return 0.0
    if f.kind == CONSTANT:
        return f.value
    t0, t1 = k * h, (k + 1) * h
    panels = 1
    previous = None
    while True:
        ts = np.linspace(t0, t1, panels + 1)
        total = integrate.trapezoid(f(ts), ts)
        if previous is not None and abs(total - previous) < 1e-10 * max(f.bound, 1e-300):
            return float(total / h)
        if panels > 2 ** 22:
            logger.warning("forcing average did not settle on [%r, %r]" % (t0, t1))
            return float(total / h)
        previous = total
        panels *= 2


###
#  SchemeParams
##
@six.python_2_unicode_compatible
class SchemeParams(object):
    """
    h (float):                  time step
    T (float):                  horizon, at least h
    level_count (int):          number of uniform levels used by the level-set lifting
    margin (int):               width in cells of the outer band bounded phases must avoid
    minimizer_choice (String):  "minimal" (T-) or "maximal" (T+)
    """

    def __init__(self, h, T, level_count=64, margin=8, minimizer_choice=MINIMAL):
        errors = []
        if not float(h) > 0:
            errors.append("scheme.h: must be positive (got %s)" % h)
        elif not float(T) >= float(h):
            errors.append("scheme.T: must be at least scheme.h (got %s < %s)" % (T, h))
        if int(level_count) < 2:
            errors.append("scheme.levels: need at least 2 levels (got %s)" % level_count)
        if int(margin) < 2:
            errors.append("grid.margin: need at least 2 cells (got %s)" % margin)
        if minimizer_choice not in (MINIMAL, MAXIMAL):
            errors.append("scheme.minimizer: must be minimal or maximal (got %r)" % minimizer_choice)
        if errors:
            raise ConfigError(errors)
        self.h = float(h)
        self.T = float(T)
        self.level_count = int(level_count)
        self.margin = int(margin)
        self.minimizer_choice = minimizer_choice

    @property
    def step_count(self):
        return int(round(self.T / self.h))

    def check_margin(self, grid, nonlinearity):
        """margin*dx must exceed the confinement growth b*h of one step when b is finite"""
        b = nonlinearity.b
        if math.isinf(b):
            return
        if not self.margin * grid.dx > b * self.h:
            raise ConfigError("grid.margin: %d cells (%r) do not exceed one step of growth b*h = %r"
                              % (self.margin, self.margin * grid.dx, b * self.h))

    def replace(self, **kwargs):
        fields = dict(h=self.h, T=self.T, level_count=self.level_count, margin=self.margin,
                      minimizer_choice=self.minimizer_choice)
        fields.update(kwargs)
        return SchemeParams(**fields)

    def __str__(self):
        return "h=%r T=%r levels=%d margin=%d %s" % (self.h, self.T, self.level_count, self.margin,
                                                     self.minimizer_choice)

    def __repr__(self):
        return "SchemeParams(%s)" % self


###
#  FlowContext
##
class FlowContext(object):
    """
    Every model a step of the scheme needs.

    grid (Grid), perimeter (PerimeterModel), anisotropy (Anisotropy),
    nonlinearity (Nonlinearity), forcing (Forcing), params (SchemeParams),
    threads (int): workers for per-level solves
    """

    def __init__(self, grid, perimeter, anisotropy, nonlinearity, forcing, params, threads=1):
        self.grid = grid
        self.perimeter = perimeter
        self.anisotropy = anisotropy
        self.nonlinearity = nonlinearity
        self.forcing = forcing
        self.params = params
        self.threads = max(1, int(threads))

    @property
    def h(self):
        return self.params.h

    def forcing_at(self, k):
        """step-averaged forcing of step k (bucketed by step index, not by float time)"""
        return forcing_step_average(self.forcing, k, self.params.h)

    def replace(self, **kwargs):
        fields = dict(grid=self.grid, perimeter=self.perimeter, anisotropy=self.anisotropy,
                      nonlinearity=self.nonlinearity, forcing=self.forcing, params=self.params,
                      threads=self.threads)
        fields.update(kwargs)
        return FlowContext(**fields)
