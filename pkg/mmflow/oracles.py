"""
mmflow oracles

Independent ground truth for the scheme: closed-form and integrated ball flows,
the inward barrier ODE and extinction times, an explicit finite-difference
level-set solver for the isotropic classical flow, and set measurements.

Copyright (C) 2026 mmflow developers
"""

import logging
import math
from collections import namedtuple

import numpy as np
import six
from retrying import retry
from scipy import integrate, ndimage

from .common import CFLViolation, DegenerateSetError, MMFlowError, cfl_violation
from .core import IDENTITY, POWER, ZERO, CellSet
from .perimeter import ball_curvature_envelope

logger = logging.getLogger(__name__)


EXACT = "exact"
BARRIER = "barrier"

ODE_RTOL = 1e-10
ODE_ATOL = 1e-12

# explicit curvature stepping is stable for dt * slope <= 0.25 dx^2 in two dimensions
CFL_NUMBER = 0.2
MIN_DT = 1e-12

RadiusMeasurement = namedtuple('RadiusMeasurement', ['radius', 'anisometry'])


def _integrate_radius(rhs, r0, t):
    """
    integrate r' = rhs(t, r) from r(0) = r0 to time t, returning 0 once r reaches 0

    Returns (radius, extinction time or None).
    """
    if t <= 0:
        return r0, None
    floor = 1e-6 * r0

    def extinct(s, r):
        return r[0] - floor
    extinct.terminal = True
    extinct.direction = -1

    solution = integrate.solve_ivp(lambda s, r: [rhs(s, max(r[0], floor))], (0.0, t), [r0],
                                   method='DOP853', rtol=ODE_RTOL, atol=ODE_ATOL, events=extinct)
    if not solution.success:
        raise MMFlowError("ball ODE integration failed: %s" % solution.message)
    if solution.t_events[0].size:
        return 0.0, float(solution.t_events[0][0])
    return float(solution.y[0, -1]), None


def exact_ball_radius(n, f, r0, t):
    """
    Radius at time t of a disk moving by V = G(-1/r + f(t)), isotropic classical curvature.

    n (Nonlinearity):   the speed law
    f (Forcing):        the forcing
    r0 (float):         initial radius
    t (float):          time

    Closed forms for Identity and Power with zero forcing, the integrated ODE otherwise;
    0 at and after extinction.
    """
    if not r0 > 0 or t < 0:
        raise MMFlowError("exact_ball_radius needs r0 > 0 and t >= 0 (got r0=%r, t=%r)" % (r0, t))
    if f.kind == ZERO and not n.reflected:
        if n.kind == IDENTITY:
            return math.sqrt(max(r0 * r0 - 2.0 * t, 0.0))
        if n.kind == POWER:
            p = 1.0 + n.gamma
            return max(r0 ** p - p * t, 0.0) ** (1.0 / p)
    return _integrate_radius(lambda s, r: float(n.G(-1.0 / r + float(f(s)))), r0, t)[0]


def exact_extinction_time(n, f, r0, horizon):
    """time at which the disk of exact_ball_radius vanishes, inf if it survives past horizon"""
    if f.kind == ZERO and not n.reflected:
        if n.kind == IDENTITY:
            return 0.5 * r0 * r0
        if n.kind == POWER:
            return r0 ** (1.0 + n.gamma) / (1.0 + n.gamma)
    when = _integrate_radius(lambda s, r: float(n.G(-1.0 / r + float(f(s)))), r0, horizon)[1]
    return float('inf') if when is None else when


def kappa_hat(r, ctx):
    """min{-1, G(-cbar(r) - |f|_inf) / c_psi}, the inward speed of the barrier ball"""
    if not r > 0:
        raise MMFlowError("kappa_hat needs r > 0 (got %r)" % r)
    cbar = ball_curvature_envelope(ctx.perimeter, r)[0]
    return min(-1.0, float(ctx.nonlinearity.G(-cbar - ctx.forcing.bound)) / ctx.anisotropy.c_psi)


def barrier_radius(r0, t, ctx):
    """
    Radius at time t of the inward barrier ball: r0 - a t while a is finite,
    otherwise the solution of r' = kappa_hat(r); 0 after extinction
    """
    if not r0 > 0:
        raise MMFlowError("barrier_radius needs r0 > 0 (got %r)" % r0)
    a = ctx.nonlinearity.a
    if not math.isinf(a):
        return max(r0 - a * t, 0.0)
    return _integrate_radius(lambda s, r: kappa_hat(r, ctx), r0, t)[0]


def extinction_time(r0, ctx):
    """first time the barrier radius reaches 0"""
    if not r0 > 0:
        raise MMFlowError("extinction_time needs r0 > 0 (got %r)" % r0)
    a = ctx.nonlinearity.a
    if not math.isinf(a):
        return r0 / a
    # kappa_hat <= -1, so extinction happens by t = r0
    radius, when = _integrate_radius(lambda s, r: kappa_hat(r, ctx), r0, 1.01 * r0)
    if when is None:
        raise MMFlowError("barrier ball did not vanish by t=%r" % (1.01 * r0))
    return when


def extinction_time_quadrature(r0, ctx):
    """integral of dr / |kappa_hat(r)| over (0, r0), the cross-check of extinction_time"""
    a = ctx.nonlinearity.a
    if not math.isinf(a):
        return r0 / a
    return integrate.quad(lambda r: 1.0 / abs(kappa_hat(r, ctx)), 0.0, r0, epsabs=1e-12, epsrel=1e-10, limit=200)[0]


###
#  BallFlow
##
@six.python_2_unicode_compatible
class BallFlow(object):
    """
    r0 (float):             initial radius
    law (String):           "exact" (r' = G(-1/r + f)) or "barrier" (r' = kappa_hat(r))
    samples ([(t, r)]):     the sampled curve
    """

    def __init__(self, r0, law, samples):
        self.r0 = r0
        self.law = law
        self.samples = samples

    @classmethod
    def sample(cls, r0, ctx, times, law=EXACT):
        if law == EXACT:
            samples = [(t, exact_ball_radius(ctx.nonlinearity, ctx.forcing, r0, t)) for t in times]
        elif law == BARRIER:
            samples = [(t, barrier_radius(r0, t, ctx)) for t in times]
        else:
            raise MMFlowError("unknown ball law %r" % law)
        return cls(r0, law, samples)

    def __str__(self):
        return "BallFlow (%s from r0=%r, %d samples)" % (self.law, self.r0, len(self.samples))

    def __repr__(self):
        return self.__str__()


###
#  finite-difference reference
##
@six.python_2_unicode_compatible
class FDState(object):
    """
    grid (Grid):            the grid
    values (ndarray):       u at time t
    epsilon (float):        gradient regularization
    t (float):              time
    dt (float):             explicit step in use when the state was recorded
    """

    def __init__(self, grid, values, epsilon, t, dt):
        self.grid = grid
        self.values = values
        self.epsilon = epsilon
        self.t = t
        self.dt = dt

    def superlevel(self, s=0.0):
        return CellSet(self.grid, self.values >= s)

    def __str__(self):
        return "FDState (t=%r, dt=%r)" % (self.t, self.dt)

    def __repr__(self):
        return self.__str__()


def _central(values, dx):
    """central differences with edge-replicated boundaries"""
    padded = np.pad(values, 1, mode='edge')
    dudx = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / (2.0 * dx)
    dudy = (padded[1:-1, 2:] - padded[1:-1, :-2]) / (2.0 * dx)
    return dudx, dudy


def _curvature_term(values, dx, epsilon):
    """return (|grad u|_reg, div(grad u / |grad u|_reg))"""
    ux, uy = _central(values, dx)
    norm = np.sqrt(ux * ux + uy * uy + epsilon * epsilon)
    nxx, _ = _central(ux / norm, dx)
    _, nyy = _central(uy / norm, dx)
    return norm, nxx + nyy


def fd_reference_evolve(u0, n, f, T, times=None):
    """
    Explicit level-set solver for u_t = |grad u|_reg G(div(grad u / |grad u|_reg) + f(t)).

    u0 (LevelFunction):     initial function, positive inside the evolving sets
    n (Nonlinearity):       Lipschitz speed law (power laws need gamma >= 1)
    f (Forcing):            forcing
    T (float):              horizon
    times ([float]):        snapshot times in [0, T], T alone by default

    Returns [FDState], one per snapshot time. The step starts at 0.2 dx^2 over the
    slope of G and halves whenever the curvature range makes it unstable.
    """
    if n.kind == POWER and n.gamma < 1.0:
        raise MMFlowError("finite-difference reference needs a Lipschitz speed law (power gamma=%r)" % n.gamma)
    grid = u0.grid
    dx = grid.dx
    epsilon = dx
    times = sorted(times if times is not None else [T])
    u = np.array(u0.values, dtype=float)

    class Clock(object):
        t = 0.0
        dt = None

    clock = Clock()
    norm, curvature = _curvature_term(u, dx, epsilon)
    argument = curvature + float(f(0.0))
    clock.dt = CFL_NUMBER * dx * dx / max(n.slope(argument.min(), argument.max()), 1e-12)
    logger.debug("finite-difference reference: initial dt %.3g" % clock.dt)

    @retry(retry_on_exception=cfl_violation, stop_func=lambda attempts, elapsed: clock.dt < MIN_DT)
    def advance(values, target):
        norm, curvature = _curvature_term(values, dx, epsilon)
        argument = curvature + float(f(clock.t))
        slope = n.slope(argument.min(), argument.max())
        if clock.dt * slope > CFL_NUMBER * dx * dx:
            clock.dt *= 0.5
            raise CFLViolation("explicit step %.3g unstable for slope %.3g" % (2.0 * clock.dt, slope))
        step = min(clock.dt, target - clock.t)
        return values + step * norm * n.G(argument), step

    snapshots = []
    for target in times:
        while clock.t < target - 1e-15:
            u, step = advance(u, target)
            clock.t = clock.t + step if target - clock.t > step else target
        snapshots.append(FDState(grid, u.copy(), epsilon, target, clock.dt))
    return snapshots


###
#  measurements
##
def measure_radius(E):
    """
    return RadiusMeasurement(radius, anisometry): the equivalent-area radius and the
    ratio of the largest to the smallest centroid distance over boundary cells
    """
    if E.is_empty():
        raise DegenerateSetError("cannot measure the radius of an empty set")
    grid = E.grid
    X, Y = grid.coordinates()
    m = E.membership
    cx, cy = X[m].mean(), Y[m].mean()
    edge = E.boundary().membership
    distances = np.hypot(X[edge] - cx, Y[edge] - cy)
    radius = math.sqrt(E.count() * grid.dx ** 2 / math.pi)
    low = distances.min()
    anisometry = float('inf') if low == 0 else float(distances.max() / low)
    return RadiusMeasurement(radius, anisometry)


def hausdorff_distance(A, B):
    """Euclidean Hausdorff distance between two cell sets in length units"""
    if A.is_empty() and B.is_empty():
        return 0.0
    if A.is_empty() or B.is_empty():
        return float('inf')
    to_b = ndimage.distance_transform_edt(~B.membership)
    to_a = ndimage.distance_transform_edt(~A.membership)
    return float(max(to_b[A.membership].max(), to_a[B.membership].max()) * A.grid.dx)


def export_radius_curve(path, rows):
    """write [(t, r_measured, r_exact, r_barrier)] as CSV with 17 significant digits"""
    np.savetxt(path, np.array(rows, dtype=float).reshape(-1, 4), delimiter=',', fmt='%.17g',
               header='t,r_measured,r_exact,r_barrier', comments='')
    logger.info("wrote radius curve (%d rows) to %s" % (len(rows), path))
