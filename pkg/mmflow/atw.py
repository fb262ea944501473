"""
mmflow minimizing-movements step

Builds the discrete step energy of a set, minimizes it exactly by max-flow/min-cut
and extracts the minimal and maximal minimizers, for bounded sets and for
complements of bounded sets.

Copyright (C) 2026 mmflow developers
"""

import logging
from collections import namedtuple

import networkx as nx
import numpy as np
import six
from networkx.algorithms.flow import boykov_kolmogorov
from scipy import ndimage

from .common import GridTooLarge, InfeasibleConstraints, MarginBreach, MMFlowError, SchemeError
from .core import BOUNDED_SET, MAXIMAL, MINIMAL, CellSet, Phase
from .distance import signed_distance
from .perimeter import _windows, perimeter_energy

logger = logging.getLogger(__name__)


# energies are handed to the flow solver as integer multiples of 2^-40
QUANTUM = 2.0 ** 40
# quantized unary terms beyond this magnitude are clipped, they are presolved anyway
UNARY_CLIP = 2 ** 60

ENUMERATION_LIMIT = 20

SOURCE = 's'
SINK = 't'

FlowStats = namedtuple('FlowStats', ['nodes', 'arcs', 'presolved', 'flow_value'])
ExhaustiveResult = namedtuple('ExhaustiveResult', ['energy', 'minimal', 'maximal', 'argmin_count'])
ChainReport = namedtuple('ChainReport', ['chain', 'nested', 'converged'])
InclusionReport = namedtuple('InclusionReport', ['minimal', 'maximal'])


###
#  StepEnergy
##
@six.python_2_unicode_compatible
class StepEnergy(object):
    """
    F -> J(F) + sum over i in F of unary(i), subject to forced_in <= F <= grid - forced_out.

    J (PerimeterModel):         pairwise part
    unary (ndarray):            one extended real per cell, -inf on forced_in, +inf on forced_out
    forced_in (CellSet):        cells every admissible F contains
    forced_out (CellSet):       cells no admissible F contains
    phase (Phase):              phase of the set the energy was built from; a complement
                                phase energy lives on the stored (complemented) set
    distance (ndarray):         signed distance of the stored set the unary was built from
    """

    def __init__(self, grid, J, unary, forced_in=None, forced_out=None, phase=None, distance=None):
        unary = np.array(unary, dtype=float)
        unary.flags.writeable = False
        self.grid = grid
        self.J = J
        self.unary = unary
        self.forced_in = forced_in if forced_in is not None else CellSet(grid, unary == -np.inf)
        self.forced_out = forced_out if forced_out is not None else CellSet(grid, unary == np.inf)
        self.phase = phase or Phase(BOUNDED_SET)
        self.distance = distance

    @property
    def free(self):
        """cells not fixed by a constraint"""
        return ~(self.forced_in.membership | self.forced_out.membership)

    def evaluate(self, F):
        """
        return the energy of F, +inf when F violates the constraints;
        forced cells contribute nothing beyond their constraint
        """
        m = F.membership
        if np.any(m & self.forced_out.membership) or np.any(~m & self.forced_in.membership):
            return float('inf')
        return float(self.unary[m & self.free].sum()) + perimeter_energy(self.J, F)

    def __str__(self):
        return "StepEnergy (%s, %d forced in, %d forced out)" % (
            self.phase, self.forced_in.count(), self.forced_out.count())

    def __repr__(self):
        return self.__str__()


@six.python_2_unicode_compatible
class StepResult(object):
    """
    minimal (CellSet):      smallest minimizer
    maximal (CellSet):      largest minimizer
    energy (float):         the common optimal value
    flow_stats (FlowStats): nodes, arcs, presolved cells and integer flow value of the cut
    """

    def __init__(self, minimal, maximal, energy, flow_stats):
        self.minimal = minimal
        self.maximal = maximal
        self.energy = energy
        self.flow_stats = flow_stats

    def __str__(self):
        return "StepResult (energy %.12g, minimal %d cells, maximal %d cells)" % (
            self.energy, self.minimal.count(), self.maximal.count())

    def __repr__(self):
        return self.__str__()


def build_step_energy(E, phase, J, n, a, fk, h):
    """
    Step energy of E for time step h and step-averaged forcing fk.

    E (CellSet):            the current set
    phase (Phase):          phase of E; a complement phase builds the dual energy on the
                            stored complement with the reflected nonlinearity and -fk
    J (PerimeterModel):     perimeter
    n (Nonlinearity):       speed law, the unary uses its inverse selection g
    a (Anisotropy):         mobility, distances use its polar
    fk (float):             forcing average over the step
    h (float):              time step

    unary(i) = g(sd(x_i) / h) * dx^2 - fk * dx^2, infinite where g is.
    """
    if not h > 0:
        raise MMFlowError("build_step_energy: h must be positive (got %r)" % h)
    stored = phase.stored(E)
    if phase.is_complement:
        n = n.reflect()
        fk = -fk
    grid = E.grid
    if stored.is_empty():
        sd = np.full(grid.shape, np.inf)
    elif stored.is_full():
        sd = np.full(grid.shape, -np.inf)
    else:
        sd = np.array(signed_distance(stored, a).values)
    with np.errstate(invalid='ignore', divide='ignore'):
        g = np.asarray(n.g(sd / h), dtype=float)
    cell_area = grid.dx ** 2
    unary = np.where(np.isfinite(g), (g - fk) * cell_area, g)
    return StepEnergy(grid, J, unary, phase=phase, distance=sd)


###
#  exact minimization
##
def _pair_quanta(se):
    """[(offset, quantized pair weight)] over every offset in the weight table"""
    dx = se.grid.dx
    return [(o, int(round(w * dx * QUANTUM))) for o, w in se.J.weights if w > 0]


def _presolve(se, pairs):
    """
    Fix every cell whose unary term dominates its free incident pair weight.

    Returns (fixed_in, fixed_out, effective) where effective holds the integer unary
    of each free cell with its fixed neighbors folded in. Fixing uses strict
    inequalities, so the minimal and maximal minimizers are unchanged.
    """
    finite = se.free
    quantized = np.zeros(se.unary.shape, dtype=np.int64)
    quantized[finite] = np.clip(np.rint(se.unary[finite] * QUANTUM), -UNARY_CLIP, UNARY_CLIP).astype(np.int64)
    fixed_in = se.forced_in.membership.copy()
    fixed_out = se.forced_out.membership.copy()
    while True:
        free = ~(fixed_in | fixed_out)
        effective = quantized.copy()
        slack = np.zeros(quantized.shape, dtype=np.int64)
        for o, c in pairs:
            a, b = _windows(quantized.shape, o)
            effective[a] += c * fixed_out[b]
            effective[a] -= c * fixed_in[b]
            slack[a] += c * free[b]
        new_out = free & (effective > slack)
        new_in = free & (effective < -slack)
        if not (new_out.any() or new_in.any()):
            return fixed_in, fixed_out, effective
        fixed_out = fixed_out | new_out
        fixed_in = fixed_in | new_in


def build_flow_graph(se):
    """
    return (graph, fixed_in, fixed_out) for the presolved energy

    graph is a networkx DiGraph on the free cells (flat indices) plus SOURCE and SINK;
    the source side of a cut is the minimizer.
    """
    clash = se.forced_in.membership & se.forced_out.membership
    if clash.any():
        raise InfeasibleConstraints("%d cells are forced both in and out" % int(clash.sum()))
    pairs = _pair_quanta(se)
    fixed_in, fixed_out, effective = _presolve(se, pairs)
    free = ~(fixed_in | fixed_out)
    ny = se.grid.ny
    graph = nx.DiGraph()
    graph.add_node(SOURCE)
    graph.add_node(SINK)
    for i, j in np.argwhere(free):
        node = int(i * ny + j)
        u = int(effective[i, j])
        graph.add_node(node)
        if u > 0:
            graph.add_edge(node, SINK, capacity=u)
        elif u < 0:
            graph.add_edge(SOURCE, node, capacity=-u)
    index = np.arange(se.grid.size).reshape(se.grid.shape)
    for o, c in pairs:
        a, b = _windows(free.shape, o)
        both = free[a] & free[b]
        for tail, head in zip(index[a][both], index[b][both]):
            graph.add_edge(int(tail), int(head), capacity=c)
    return graph, fixed_in, fixed_out


def _residual_sides(graph):
    """cells reachable from SOURCE and cells reaching SINK in the residual network"""
    if graph.number_of_edges() == 0:
        return set(), set(), 0
    residual = boykov_kolmogorov(graph, SOURCE, SINK, capacity='capacity')
    open_arcs = nx.DiGraph()
    open_arcs.add_nodes_from(residual)
    open_arcs.add_edges_from((u, v) for u, v, attr in residual.edges(data=True)
                             if attr['capacity'] - attr['flow'] > 0)
    return nx.descendants(open_arcs, SOURCE), nx.ancestors(open_arcs, SINK), residual.graph['flow_value']


def minimize_step(se):
    """
    Minimal and maximal minimizers of a step energy by a single max-flow.

    The minimal minimizer is the set of cells reachable from the source in the
    residual network, the maximal one the cells that cannot reach the sink.
    Returns a StepResult.
    """
    graph, fixed_in, fixed_out = build_flow_graph(se)
    ny = se.grid.ny
    free_nodes = [node for node in graph if node not in (SOURCE, SINK)]
    reach_source, reach_sink, flow_value = _residual_sides(graph)
    minimal = fixed_in.copy()
    maximal = fixed_in.copy()
    for node in free_nodes:
        i, j = divmod(node, ny)
        if node in reach_source:
            minimal[i, j] = True
        if node not in reach_sink:
            maximal[i, j] = True
    minimal = CellSet(se.grid, minimal)
    maximal = CellSet(se.grid, maximal)
    energy = se.evaluate(minimal)
    stats = FlowStats(graph.number_of_nodes(), graph.number_of_edges(),
                      se.grid.size - len(free_nodes), flow_value)
    logger.debug("min-cut: %d nodes, %d arcs, %d presolved, flow %d" % stats)
    return StepResult(minimal, maximal, energy, stats)


def export_flow_instance(se, path):
    """write the presolved flow instance as CSV (tail, head, capacity)"""
    graph, _, _ = build_flow_graph(se)
    rows = np.array([(u, v, c) for u, v, c in graph.edges(data='capacity')], dtype=object).reshape(-1, 3)
    np.savetxt(path, rows, delimiter=',', fmt='%s', header='tail,head,capacity', comments='')
    logger.info("wrote flow instance (%d arcs) to %s" % (len(rows), path))


def enumerate_minimizers(se):
    """
    Exhaustive oracle: minimum energy with the intersection and union of all
    minimizers, over every admissible set. At most 20 free cells.
    """
    if np.any(se.forced_in.membership & se.forced_out.membership):
        raise InfeasibleConstraints("cells forced both in and out")
    free = se.free
    m = int(free.sum())
    if m > ENUMERATION_LIMIT:
        raise GridTooLarge("enumeration is limited to %d free cells (got %d)" % (ENUMERATION_LIMIT, m))
    subsets = ((np.arange(2 ** m, dtype=np.uint32)[:, None] >> np.arange(m, dtype=np.uint32)[None, :]) & 1).astype(bool)
    base = se.forced_in.membership
    position = -np.ones(se.grid.shape, dtype=np.int64)
    position[free] = np.arange(m)
    energies = subsets.dot(se.unary[free])
    dx = se.grid.dx
    for o, w in se.J.weights:
        a, b = _windows(free.shape, o)
        pa, pb = position[a].ravel(), position[b].ravel()
        ba, bb = base[a].ravel(), base[b].ravel()
        for k in range(len(pa)):
            x = subsets[:, pa[k]] if pa[k] >= 0 else np.full(len(subsets), ba[k])
            y = subsets[:, pb[k]] if pb[k] >= 0 else np.full(len(subsets), bb[k])
            energies = energies + w * dx * (x & ~y)
    best = energies.min()
    winners = subsets[energies <= best + 1e-9]
    minimal = base.copy()
    maximal = base.copy()
    minimal[free] = winners.all(axis=0)
    maximal[free] = winners.any(axis=0)
    minimal = CellSet(se.grid, minimal)
    return ExhaustiveResult(se.evaluate(minimal), minimal, CellSet(se.grid, maximal), len(winners))


###
#  the step operator
##
def _pick(result, choice, phase):
    """stored-side minimizer for the requested choice; complements swap minimal and maximal"""
    if choice not in (MINIMAL, MAXIMAL):
        raise MMFlowError("unknown minimizer choice %r" % choice)
    want_minimal = (choice == MINIMAL) != phase.is_complement
    return result.minimal if want_minimal else result.maximal


def atw_step(E, phase, ctx, k, choice=None, level=None, stats=None):
    """
    One step of the scheme, T-E or T+E.

    E (CellSet):            the current set (the actual set, for either phase)
    phase (Phase):          its phase
    ctx (FlowContext):      models and scheme parameters
    k (int):                step index, selects the forcing average over [k h, (k+1) h]
    choice (String):        "minimal" or "maximal", ctx.params.minimizer_choice by default
    level (float):          level tag for errors raised from a level-set lift
    stats (list):           FlowStats of the solve are appended when given

    Returns the new set. Raises MarginBreach when a bounded phase reaches the margin.
    """
    choice = choice or ctx.params.minimizer_choice
    margin = ctx.params.margin
    if phase.stored(E).touches_margin(margin):
        raise MarginBreach("input set reaches the margin band", step=k, level=level)
    se = build_step_energy(E, phase, ctx.perimeter, ctx.nonlinearity, ctx.anisotropy,
                           ctx.forcing_at(k), ctx.h)
    try:
        result = minimize_step(se)
    except SchemeError as e:
        raise type(e)(e.message, step=k, level=level)
    if stats is not None:
        stats.append(result.flow_stats)
    stored = _pick(result, choice, phase)
    if stored.touches_margin(margin):
        raise MarginBreach("evolved set reaches the margin band", step=k, level=level)
    return phase.restore(stored)


def truncation_sequence_check(E, ctx, k, n_list, choice=MINIMAL):
    """
    Minimizers of the energies with g replaced by max(g, -n) (minimal chain) or
    min(g, n) (maximal chain) for increasing n.

    E (CellSet):            a bounded set
    ctx (FlowContext):      models and scheme parameters
    k (int):                step index
    n_list ([float]):       increasing truncation levels
    choice (String):        "minimal" or "maximal"

    Returns a ChainReport: the chain, whether it is monotone (nondecreasing for the
    minimal chain, nonincreasing for the maximal one) and whether its last element
    equals the untruncated minimizer.
    """
    n_list = list(n_list)
    if any(n1 <= n0 for n0, n1 in zip(n_list[:-1], n_list[1:])):
        raise MMFlowError("truncation levels must be increasing")
    phase = Phase(BOUNDED_SET)
    fk = ctx.forcing_at(k)
    se = build_step_energy(E, phase, ctx.perimeter, ctx.nonlinearity, ctx.anisotropy, fk, ctx.h)
    cell_area = E.grid.dx ** 2
    g = se.unary / cell_area + fk
    chain = []
    for n in n_list:
        clipped = np.maximum(g, -n) if choice == MINIMAL else np.minimum(g, n)
        unary = np.where(np.isfinite(clipped), (clipped - fk) * cell_area, clipped)
        result = minimize_step(StepEnergy(E.grid, ctx.perimeter, unary, phase=phase, distance=se.distance))
        chain.append(result.minimal if choice == MINIMAL else result.maximal)
    if choice == MINIMAL:
        nested = all(a.issubset(b) for a, b in zip(chain[:-1], chain[1:]))
    else:
        nested = all(b.issubset(a) for a, b in zip(chain[:-1], chain[1:]))
    exact = minimize_step(se)
    converged = bool(chain) and chain[-1] == (exact.minimal if choice == MINIMAL else exact.maximal)
    return ChainReport(chain, nested, converged)


def comparison_check(E1, E2, ctx, k, phase1=None, phase2=None):
    """
    return InclusionReport(minimal, maximal): whether T-E1 <= T-E2 and T+E1 <= T+E2
    for nested inputs E1 <= E2, each in its own phase
    """
    if not E1.issubset(E2):
        raise MMFlowError("comparison_check needs E1 contained in E2")
    phase1 = phase1 or Phase(BOUNDED_SET)
    phase2 = phase2 or Phase(BOUNDED_SET)
    inclusions = []
    for choice in (MINIMAL, MAXIMAL):
        inclusions.append(atw_step(E1, phase1, ctx, k, choice).issubset(atw_step(E2, phase2, ctx, k, choice)))
    return InclusionReport(*inclusions)


def dissipation_check(E, ctx, k, n1, n2):
    """
    return InclusionReport(minimal, maximal) for two nonlinearities with g1 <= g2:
    whether the minimizer built with g2 is contained in the one built with g1
    """
    phase = Phase(BOUNDED_SET)
    fk = ctx.forcing_at(k)
    results = [minimize_step(build_step_energy(E, phase, ctx.perimeter, n, ctx.anisotropy, fk, ctx.h))
               for n in (n1, n2)]
    return InclusionReport(results[1].minimal.issubset(results[0].minimal),
                           results[1].maximal.issubset(results[0].maximal))


def interface_displacement(E, F):
    """
    return max over the cells of E xor F of the Euclidean |sd_E| in length units,
    0 when the sets agree
    """
    moved = E.symmetric_difference(F).membership
    if not moved.any():
        return 0.0
    if E.is_empty() or E.is_full():
        return float('inf')
    dx = E.grid.dx
    sd = np.where(E.membership, ndimage.distance_transform_edt(E.membership),
                  ndimage.distance_transform_edt(~E.membership)) * dx
    return float(sd[moved].max())
