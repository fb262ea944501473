"""
mmflow command line tool

    mmflow run --config <path> --out <dir>
    mmflow preset --name <preset> --out <dir>
    mmflow preset --list
    mmflow verify --suite <quick|acceptance> [--out <dir>]

Common options: --threads <k> (default: MMFLOW_THREADS environment variable, then 1),
--seed <n> for the randomized verification suites, --verbose.

Copyright (C) 2026 mmflow developers
"""

from __future__ import print_function

import argparse
import io
import logging
import math
import os
import sys
import tempfile
import time
from collections import namedtuple

import numpy as np
import six
from six.moves import configparser
from tabulate import tabulate

from . import presets as preset_registry
from .atw import atw_step, enumerate_minimizers, interface_displacement, minimize_step, StepEnergy, comparison_check
from .common import ConfigError, MMFlowError
from .core import (BOUNDED_COMPLEMENT, CLAMP, IDENTITY, MINIMAL, PIECEWISE, POWER,
                   Anisotropy, CellSet, FlowContext, Forcing, Grid, LevelFunction, Nonlinearity, Phase,
                   SchemeParams)
from .distance import signed_distance
from .levelset import (evolve, gaps_nonincreasing, h_refinement_study, level_tracking_check,
                       modulus_check, operator_law_check)
from .oracles import (barrier_radius, exact_ball_radius, exact_extinction_time, export_radius_curve,
                      fd_reference_evolve, hausdorff_distance, measure_radius)
from .perimeter import CROFTON, FRACTIONAL, PerimeterModel, perimeter_energy, submodularity_check

logger = logging.getLogger(__name__)


DEFAULT_THREADS = 1

# a disk sheds a ring of cells in one step only when its exact move exceeds a cell
MIN_CELLS_PER_STEP = 1.0

SCHEMA = {
    'grid':         ('nx', 'ny', 'dx', 'origin', 'margin'),
    'perimeter':    ('kind', 'neighborhood', 's', 'cutoff'),
    'anisotropy':   ('kind', 'weights'),
    'nonlinearity': ('kind', 'M', 'gamma', 'table'),
    'forcing':      ('kind', 'value', 'times', 'values'),
    'scheme':       ('h', 'T', 'levels', 'minimizer'),
    'initial':      ('kind', 'center', 'radius', 'lower', 'upper', 'disks', 'rectangles',
                     'floor', 'ceil', 'path', 'threshold'),
    'outputs':      ('frame_stride', 'frames', 'curves', 'weights', 'distance'),
    'checks':       ('radius_tolerance', 'radius_horizon', 'anisometry_max', 'barrier', 'barrier_slack',
                     'speed_bound', 'shrinking', 'drift_tolerance', 'fd_crosscheck', 'fd_samples',
                     'fd_tolerance', 'fd_drift_tolerance', 'level_tracking', 'tracking_steps', 'modulus',
                     'refinement'),
    }

REQUIRED_SECTIONS = ('grid', 'scheme', 'initial')

SET_KINDS = ('disk', 'rectangle', 'union', 'raster')
CONE = 'cone'

_REQUIRED = object()


def resolve_threads(threads=None):
    """explicit value, then the MMFLOW_THREADS environment variable, then DEFAULT_THREADS"""
    if threads is None and 'MMFLOW_THREADS' in os.environ:
        threads = os.environ['MMFLOW_THREADS']
    if threads is None:
        return DEFAULT_THREADS
    try:
        threads = int(threads)
    except ValueError:
        raise ConfigError("threads: not an integer (%r)" % threads)
    if threads < 1:
        raise ConfigError("threads: must be at least 1 (got %d)" % threads)
    return threads


###
#  configuration
##
class _Reader(object):
    """typed access to the parsed INI text, collecting errors instead of raising"""

    def __init__(self, parser):
        self.parser = parser
        self.errors = []

    def raw(self, section, key, default=_REQUIRED):
        if self.parser.has_section(section) and self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if default is _REQUIRED:
            self.errors.append("%s.%s: missing required key" % (section, key))
            return None
        return default

    def convert(self, section, key, kind, default=_REQUIRED):
        value = self.raw(section, key, default)
        if value is None or not isinstance(value, six.string_types):
            return value
        try:
            return kind(value)
        except ValueError:
            self.errors.append("%s.%s: cannot read %r" % (section, key, value))
            return None

    def floats(self, section, key, default=_REQUIRED):
        return self.convert(section, key, lambda text: [float(x) for x in text.split(',')], default)

    def boolean(self, section, key, default=False):
        value = self.raw(section, key, None)
        if value is None:
            return default
        if value.lower() in ('yes', 'true', 'on', '1'):
            return True
        if value.lower() in ('no', 'false', 'off', '0'):
            return False
        self.errors.append("%s.%s: expected yes or no (got %r)" % (section, key, value))
        return default

    def build(self, factory, *args, **kwargs):
        """call a model constructor, folding its ConfigError into the collected errors"""
        try:
            return factory(*args, **kwargs)
        except ConfigError as e:
            self.errors.extend(e.errors)
            return None


def _groups(text, width, section, key, reader):
    """'a b c; d e f' -> [(a, b, c), (d, e, f)]"""
    groups = []
    for chunk in text.split(';'):
        parts = chunk.split()
        if len(parts) != width:
            reader.errors.append("%s.%s: expected %d numbers per entry (got %r)" % (section, key, width, chunk))
            continue
        groups.append(tuple(float(x) for x in parts))
    return groups


@six.python_2_unicode_compatible
class RunConfig(object):
    """
    A validated run configuration.

    text (String):                the INI text it was parsed from
    name (String):                preset name or config file name
    grid, perimeter, anisotropy, nonlinearity, forcing, params:  the models
    initial (dict):               initial condition spec, 'kind' plus its parameters
    outputs (dict):               frame_stride, frames, curves, weights, distance
    checks (dict):                activated checks and their tolerances
    """

    def __init__(self, text, name, grid, perimeter, anisotropy, nonlinearity, forcing, params,
                 initial, outputs, checks):
        self.text = text
        self.name = name
        self.grid = grid
        self.perimeter = perimeter
        self.anisotropy = anisotropy
        self.nonlinearity = nonlinearity
        self.forcing = forcing
        self.params = params
        self.initial = initial
        self.outputs = outputs
        self.checks = checks

    @property
    def set_mode(self):
        return self.initial['kind'] in SET_KINDS

    def context(self, threads=1):
        return FlowContext(self.grid, self.perimeter, self.anisotropy, self.nonlinearity, self.forcing,
                           self.params, threads)

    def initial_condition(self):
        """return the initial CellSet (set kinds) or LevelFunction (cone)"""
        spec = self.initial
        kind = spec['kind']
        if kind == 'disk':
            return CellSet.disk(self.grid, spec['center'], spec['radius'])
        if kind == 'rectangle':
            return CellSet.rectangle(self.grid, spec['lower'], spec['upper'])
        if kind == 'union':
            E = CellSet.empty(self.grid)
            for x, y, r in spec['disks']:
                E = E.union(CellSet.disk(self.grid, (x, y), r))
            for x0, y0, x1, y1 in spec['rectangles']:
                E = E.union(CellSet.rectangle(self.grid, (x0, y0), (x1, y1)))
            return E
        if kind == 'raster':
            pixels = read_pgm(spec['path'])
            if pixels.shape != self.grid.shape:
                raise ConfigError("initial.path: raster %s does not match grid %s" % (pixels.shape, self.grid))
            return CellSet(self.grid, pixels >= spec['threshold'])
        return LevelFunction.cone(self.grid, spec['center'], spec['radius'], spec['floor'], spec['ceil'])

    def __str__(self):
        return "RunConfig %s (%s, %s, %s)" % (self.name, self.grid, self.nonlinearity, self.params)

    def __repr__(self):
        return self.__str__()


def parse_config(text, name="config"):
    """
    Parse and validate INI run configuration text.

    Returns a RunConfig; raises ConfigError listing every offending section.key.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(six.text_type(text))
    except configparser.Error as e:
        raise ConfigError("unreadable configuration: %s" % e)
    reader = _Reader(parser)
    errors = reader.errors
    for section in parser.sections():
        if section not in SCHEMA:
            errors.append("%s: unknown section" % section)
            continue
        for key in parser.options(section):
            if key not in SCHEMA[section]:
                errors.append("%s.%s: unknown key" % (section, key))
    for section in REQUIRED_SECTIONS:
        if not parser.has_section(section):
            errors.append("%s: missing required section" % section)

    # grid
    nx = reader.convert('grid', 'nx', int)
    ny = reader.convert('grid', 'ny', int)
    dx = reader.convert('grid', 'dx', float)
    origin = reader.floats('grid', 'origin', None)
    margin = reader.convert('grid', 'margin', int, 8)
    grid = None
    if None not in (nx, ny, dx):
        if origin is None:
            grid = reader.build(Grid.centered, nx, ny, dx)
        elif len(origin) != 2:
            errors.append("grid.origin: expected two numbers")
        else:
            grid = reader.build(Grid, nx, ny, dx, origin)

    # perimeter
    perimeter = None
    kind = reader.raw('perimeter', 'kind', CROFTON)
    if kind == CROFTON:
        perimeter = reader.build(PerimeterModel.crofton, reader.convert('perimeter', 'neighborhood', int, 16))
    elif kind == FRACTIONAL:
        s = reader.convert('perimeter', 's', float)
        cutoff = reader.convert('perimeter', 'cutoff', int)
        if None not in (s, cutoff, grid):
            perimeter = reader.build(PerimeterModel.fractional, s, cutoff, grid.dx)
    else:
        errors.append("perimeter.kind: unknown kind %r" % kind)

    # anisotropy
    anisotropy = reader.build(Anisotropy, reader.raw('anisotropy', 'kind', 'euclidean'),
                              reader.floats('anisotropy', 'weights', None))

    # nonlinearity
    kind = reader.raw('nonlinearity', 'kind', IDENTITY)
    table = reader.raw('nonlinearity', 'table', None)
    if table is not None:
        try:
            table = [tuple(float(x) for x in entry.split(':')) for entry in table.split(',')]
            if any(len(entry) != 2 for entry in table):
                raise ValueError(table)
        except ValueError:
            errors.append("nonlinearity.table: expected x:G pairs separated by commas")
            table = None
    nonlinearity = reader.build(Nonlinearity, kind,
                                M=reader.convert('nonlinearity', 'M', float, None),
                                gamma=reader.convert('nonlinearity', 'gamma', float, None),
                                table=table if kind == PIECEWISE else None)

    # forcing
    forcing = reader.build(Forcing, reader.raw('forcing', 'kind', 'zero'),
                           value=reader.convert('forcing', 'value', float, None),
                           times=reader.floats('forcing', 'times', None),
                           values=reader.floats('forcing', 'values', None))

    # scheme
    h = reader.convert('scheme', 'h', float)
    T = reader.convert('scheme', 'T', float)
    params = None
    if None not in (h, T):
        params = reader.build(SchemeParams, h, T,
                              level_count=reader.convert('scheme', 'levels', int, 64),
                              margin=margin if margin is not None else 8,
                              minimizer_choice=reader.raw('scheme', 'minimizer', MINIMAL))
    if params is not None and h is not None and T is not None:
        if abs(T / h - round(T / h)) > 1e-9 * (T / h):
            errors.append("scheme.T: must be a multiple of scheme.h")
    if params is not None and grid is not None and nonlinearity is not None:
        reader.build(params.check_margin, grid, nonlinearity)

    # initial condition
    initial = {'kind': reader.raw('initial', 'kind')}
    ikind = initial['kind']
    if ikind in ('disk', 'cone'):
        initial['center'] = reader.floats('initial', 'center', [0.0, 0.0])
        initial['radius'] = reader.convert('initial', 'radius', float)
        if initial['radius'] is not None and not initial['radius'] > 0:
            errors.append("initial.radius: must be positive")
    if ikind == 'rectangle':
        initial['lower'] = reader.floats('initial', 'lower')
        initial['upper'] = reader.floats('initial', 'upper')
    elif ikind == 'union':
        disks = reader.raw('initial', 'disks', '')
        rectangles = reader.raw('initial', 'rectangles', '')
        initial['disks'] = _groups(disks, 3, 'initial', 'disks', reader) if disks else []
        initial['rectangles'] = _groups(rectangles, 4, 'initial', 'rectangles', reader) if rectangles else []
        if not (initial['disks'] or initial['rectangles']):
            errors.append("initial.disks, initial.rectangles: union needs at least one shape")
    elif ikind == 'raster':
        initial['path'] = reader.raw('initial', 'path')
        initial['threshold'] = reader.convert('initial', 'threshold', int, 128)
    elif ikind == CONE:
        initial['floor'] = reader.convert('initial', 'floor', float)
        initial['ceil'] = reader.convert('initial', 'ceil', float)
        if None not in (initial['floor'], initial['ceil']) and not initial['floor'] < initial['ceil']:
            errors.append("initial.floor: must be below initial.ceil")
    elif ikind not in ('disk',) and ikind is not None:
        errors.append("initial.kind: unknown kind %r" % ikind)

    outputs = {
        'frame_stride': reader.convert('outputs', 'frame_stride', int, 1),
        'frames': reader.boolean('outputs', 'frames', True),
        'curves': reader.boolean('outputs', 'curves', True),
        'weights': reader.boolean('outputs', 'weights', False),
        'distance': reader.boolean('outputs', 'distance', False),
        }
    if outputs['frame_stride'] is not None and outputs['frame_stride'] < 1:
        errors.append("outputs.frame_stride: must be at least 1")

    checks = {
        'radius_tolerance': reader.convert('checks', 'radius_tolerance', float, None),
        'radius_horizon': reader.convert('checks', 'radius_horizon', float, 0.8),
        'anisometry_max': reader.convert('checks', 'anisometry_max', float, None),
        'barrier': reader.boolean('checks', 'barrier'),
        'barrier_slack': reader.convert('checks', 'barrier_slack', float, 2.0),
        'speed_bound': reader.boolean('checks', 'speed_bound'),
        'shrinking': reader.boolean('checks', 'shrinking'),
        'drift_tolerance': reader.convert('checks', 'drift_tolerance', float, None),
        'fd_crosscheck': reader.boolean('checks', 'fd_crosscheck'),
        'fd_samples': reader.convert('checks', 'fd_samples', int, 10),
        'fd_tolerance': reader.convert('checks', 'fd_tolerance', float, None),
        'fd_drift_tolerance': reader.convert('checks', 'fd_drift_tolerance', float, None),
        'level_tracking': reader.boolean('checks', 'level_tracking'),
        'tracking_steps': reader.convert('checks', 'tracking_steps', int, 1),
        'modulus': reader.boolean('checks', 'modulus'),
        'refinement': reader.floats('checks', 'refinement', None),
        }
    disk_only = ('radius_tolerance', 'anisometry_max', 'barrier', 'drift_tolerance', 'fd_crosscheck')
    for key in disk_only:
        if checks[key] and ikind != 'disk':
            errors.append("checks.%s: needs a disk initial condition" % key)
    for key in ('level_tracking', 'modulus', 'refinement'):
        if checks[key] and ikind != CONE:
            errors.append("checks.%s: needs a cone initial condition" % key)
    if checks['speed_bound'] and nonlinearity is not None and \
            (math.isinf(nonlinearity.a) or math.isinf(nonlinearity.b)):
        errors.append("checks.speed_bound: needs a bounded nonlinearity")
    if checks['fd_crosscheck'] and anisotropy is not None and anisotropy.kind != 'euclidean':
        errors.append("checks.fd_crosscheck: finite differences are isotropic only")
    if checks['fd_crosscheck'] and perimeter is not None and perimeter.kind != CROFTON:
        errors.append("checks.fd_crosscheck: finite differences use the classical perimeter")

    if errors:
        raise ConfigError(errors)
    logger.info("parsed configuration %s" % name)
    return RunConfig(text, name, grid, perimeter, anisotropy, nonlinearity, forcing, params,
                     initial, outputs, checks)


def preset(name):
    """return the RunConfig of a registered preset"""
    return parse_config(preset_registry.preset_text(name), name=name)


###
#  frames
##
def write_pgm(path, pixels):
    """write a uint8 array indexed [i, j] as binary PGM, i along columns and j up the rows"""
    pixels = np.asarray(pixels, dtype=np.uint8)
    raster = np.ascontiguousarray(pixels.T[::-1, :])
    with io.open(path, 'wb') as f:
        f.write(("P5\n%d %d\n255\n" % (pixels.shape[0], pixels.shape[1])).encode('ascii'))
        f.write(raster.tobytes())


def read_pgm(path):
    """read a binary PGM (maxval 255) into a uint8 array indexed [i, j]"""
    with io.open(path, 'rb') as f:
        data = f.read()
    fields = []
    position = 0
    while len(fields) < 4:
        while position < len(data) and data[position:position + 1].isspace():
            position += 1
        if data[position:position + 1] == b'#':
            while position < len(data) and data[position:position + 1] not in (b'\n', b'\r'):
                position += 1
            continue
        start = position
        while position < len(data) and not data[position:position + 1].isspace():
            position += 1
        fields.append(data[start:position])
    if fields[0] != b'P5' or int(fields[3]) != 255:
        raise ConfigError("initial.path: %s is not an 8-bit binary PGM" % path)
    width, height = int(fields[1]), int(fields[2])
    raster = np.frombuffer(data[position + 1:position + 1 + width * height], dtype=np.uint8)
    if raster.size != width * height:
        raise ConfigError("initial.path: %s is truncated" % path)
    return raster.reshape(height, width)[::-1, :].T.copy()


def write_set_frame(path, E):
    write_pgm(path, np.where(E.membership, 255, 0))


def write_function_frame(path, u):
    """rescale u linearly from [floor, ceil] to [0, 255]; floor and ceil go to a sidecar file"""
    scaled = np.rint(255.0 * (u.values - u.floor_value) / (u.ceil_value - u.floor_value))
    write_pgm(path, np.clip(scaled, 0, 255))
    with io.open(os.path.splitext(path)[0] + '.txt', 'w', encoding='ascii') as f:
        f.write(u"floor: %.17g\nceil: %.17g\n" % (u.floor_value, u.ceil_value))


###
#  RunReport
##
CheckResult = namedtuple('CheckResult', ['name', 'value', 'tolerance', 'unit', 'passed'])


@six.python_2_unicode_compatible
class RunReport(object):
    """
    config (RunConfig):                 the configuration echo
    displacement ([float]):             per-step interface displacement, length units
    checks ([CheckResult]):             activated checks with worst-case value, tolerance, verdict
    radius_rows ([tuple]):              (t, r_measured, r_exact, r_barrier) for disk runs
    flow_stats ([FlowStats]):           one per min-cut solve in set mode
    wall_clock (float):                 seconds, logged and kept out of report.txt
    """

    def __init__(self, config):
        self.config = config
        self.displacement = []
        self.checks = []
        self.radius_rows = []
        self.flow_stats = []
        self.wall_clock = 0.0

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    def add_check(self, name, value, tolerance, unit, passed):
        self.checks.append(CheckResult(name, value, tolerance, unit, bool(passed)))
        logger.info("check %s: %s (value %r, tolerance %r)" % (name, "pass" if passed else "FAIL", value, tolerance))

    def render(self):
        """the report as a two-space indented key: value tree followed by the check table"""
        c = self.config
        lines = ["run:",
                 "  name: %s" % c.name,
                 "  mode: %s" % ("sets" if c.set_mode else "levels"),
                 "  steps: %d" % c.params.step_count,
                 "config:",
                 "  grid: %s" % c.grid,
                 "  margin: %d" % c.params.margin,
                 "  perimeter: %s" % c.perimeter,
                 "  anisotropy: %s" % c.anisotropy,
                 "  nonlinearity: %s" % c.nonlinearity,
                 "  forcing: %s" % c.forcing,
                 "  scheme: %s" % c.params,
                 "  initial: %s" % c.initial['kind'],
                 "displacement:",
                 "  count: %d" % len(self.displacement),
                 "  max: %.17g" % (max(self.displacement) if self.displacement else 0.0)]
        if self.flow_stats:
            lines += ["flow:",
                      "  solves: %d" % len(self.flow_stats),
                      "  max_nodes: %d" % max(s.nodes for s in self.flow_stats),
                      "  max_arcs: %d" % max(s.arcs for s in self.flow_stats),
                      "  min_presolved: %d" % min(s.presolved for s in self.flow_stats)]
        lines.append("checks:")
        for check in self.checks:
            lines += ["  %s:" % check.name,
                      "    value: %.17g" % check.value,
                      "    tolerance: %.17g" % check.tolerance,
                      "    unit: %s" % check.unit,
                      "    verdict: %s" % ("pass" if check.passed else "fail")]
        lines.append("verdict: %s" % ("pass" if self.passed else "fail"))
        table = [['check', 'value', 'tolerance', 'unit', 'verdict']]
        table.extend([check.name, check.value, check.tolerance, check.unit, "pass" if check.passed else "FAIL"]
                     for check in self.checks)
        return "\n".join(lines) + "\n\n" + tabulate(table, headers='firstrow') + "\n"

    def __str__(self):
        return "RunReport %s (%d checks, %s)" % (self.config.name, len(self.checks),
                                                 "pass" if self.passed else "fail")

    def __repr__(self):
        return self.__str__()


###
#  run
##
def _fd_initial(config):
    """signed-distance cone of the initial disk for the finite-difference reference"""
    r0 = config.initial['radius']
    return LevelFunction.cone(config.grid, config.initial['center'], r0, -r0, r0)


def _run_sets(config, ctx, E0, out_dir, report):
    grid = config.grid
    dx = grid.dx
    h = ctx.h
    steps = config.params.step_count
    stride = config.outputs['frame_stride']
    checks = config.checks
    disk = config.initial['kind'] == 'disk'
    r0 = config.initial.get('radius')
    phase = Phase.of(E0, config.params.margin)

    fd_steps = []
    if checks['fd_crosscheck']:
        samples = max(1, checks['fd_samples'])
        fd_steps = sorted(set(max(1, int(round(i * steps / float(samples)))) for i in range(1, samples + 1)))
    sampled_sets = {}

    if config.outputs['frames']:
        write_set_frame(os.path.join(out_dir, 'frame_%04d.pgm' % 0), E0)
    E = E0
    shrinking = True
    anisometry = []
    for k in range(steps):
        E_next = atw_step(E, phase, ctx, k, stats=report.flow_stats)
        report.displacement.append(interface_displacement(E, E_next))
        shrinking = shrinking and E_next.issubset(E)
        E = E_next
        t = (k + 1) * h
        if disk:
            if E.is_empty():
                measured = 0.0
            else:
                measurement = measure_radius(E)
                measured = measurement.radius
                anisometry.append((t, measurement.anisometry))
            exact = exact_ball_radius(config.nonlinearity, config.forcing, r0, t)
            barrier = barrier_radius(r0, t, ctx) if checks['barrier'] else float('nan')
            report.radius_rows.append((t, measured, exact, barrier))
        if k + 1 in fd_steps:
            sampled_sets[k + 1] = E
        if config.outputs['frames'] and (k + 1) % stride == 0:
            write_set_frame(os.path.join(out_dir, 'frame_%04d.pgm' % (k + 1)), E)
        logger.info("step %d of %d" % (k + 1, steps))

    if disk and config.outputs['curves']:
        export_radius_curve(os.path.join(out_dir, 'radius.csv'), report.radius_rows)

    if disk and (checks['radius_tolerance'] is not None or checks['anisometry_max'] is not None):
        horizon = checks['radius_horizon'] * exact_extinction_time(config.nonlinearity, config.forcing, r0,
                                                                   config.params.T)
        if checks['radius_tolerance'] is not None:
            worst = max([abs(m - e) / dx for t, m, e, _ in report.radius_rows if t <= horizon] or [0.0])
            report.add_check('radius_tracking', worst, checks['radius_tolerance'], 'cells',
                             worst <= checks['radius_tolerance'])
        if checks['anisometry_max'] is not None:
            worst = max([a for t, a in anisometry if t <= horizon] or [1.0])
            report.add_check('anisometry', worst, checks['anisometry_max'], 'ratio',
                             worst <= checks['anisometry_max'])
    if disk and (checks['radius_tolerance'] is not None or
                 (checks['fd_crosscheck'] and checks['fd_tolerance'] is not None)):
        _interface_resolution_check(config, report)
    if checks['barrier']:
        worst = max([(b - m) / dx for t, m, e, b in report.radius_rows] or [0.0])
        report.add_check('barrier_containment', worst, checks['barrier_slack'], 'cells',
                         worst <= checks['barrier_slack'])
    if checks['drift_tolerance'] is not None:
        worst = max([abs(m - r0) / dx for t, m, e, b in report.radius_rows] or [0.0])
        report.add_check('equilibrium_drift', worst, checks['drift_tolerance'], 'cells',
                         worst <= checks['drift_tolerance'])
    if checks['speed_bound']:
        _speed_bound_check(config, report)
    if checks['shrinking']:
        report.add_check('monotone_shrinking', 0.0 if shrinking else 1.0, 0.0, 'violations', shrinking)
    if checks['fd_crosscheck']:
        times = [k * h for k in fd_steps]
        states = fd_reference_evolve(_fd_initial(config), config.nonlinearity, config.forcing, times[-1], times)
        if checks['fd_tolerance'] is not None:
            worst = max(hausdorff_distance(sampled_sets[k], state.superlevel(0.0)) / dx
                        for k, state in zip(fd_steps, states))
            report.add_check('fd_hausdorff', worst, checks['fd_tolerance'], 'cells',
                             worst <= checks['fd_tolerance'])
        if checks['fd_drift_tolerance'] is not None:
            worst = max(abs(measure_radius(state.superlevel(0.0)).radius - r0) / dx for state in states)
            report.add_check('fd_equilibrium_drift', worst, checks['fd_drift_tolerance'], 'cells',
                             worst <= checks['fd_drift_tolerance'])


def _interface_resolution_check(config, report):
    """
    Exact disk move over the first step in cells. Below one cell the cell-center
    distance pins the interface and the radius checks measure the pinning.
    """
    r0 = config.initial['radius']
    speed = abs(float(config.nonlinearity.G(-1.0 / r0 + float(config.forcing(0.0)))))
    if speed == 0.0:
        return
    cells = speed * config.params.h / config.grid.dx
    if cells < MIN_CELLS_PER_STEP:
        logger.warning("interface moves %.3g cells per step, under %.3g: expect a pinned disk"
                       % (cells, MIN_CELLS_PER_STEP))
    report.add_check('interface_resolution', cells, MIN_CELLS_PER_STEP, 'cells/step',
                     cells >= MIN_CELLS_PER_STEP)


def _speed_bound_check(config, report):
    n = config.nonlinearity
    bound = config.anisotropy.c_psi * max(n.a, n.b) * config.params.h + 2.0 * config.grid.dx
    worst = max(report.displacement or [0.0])
    report.add_check('speed_bound', worst / config.grid.dx, bound / config.grid.dx, 'cells', worst <= bound)


def _run_levels(config, ctx, u0, out_dir, report):
    checks = config.checks
    stride = config.outputs['frame_stride']
    record = evolve(u0, ctx, config.params.T, stride=stride)
    report.displacement = list(record.per_step_displacement)
    if config.outputs['frames']:
        for t, u in zip(record.times, record.snapshots):
            write_function_frame(os.path.join(out_dir, 'frame_%04d.pgm' % int(round(t / ctx.h))), u)
    if checks['speed_bound']:
        _speed_bound_check(config, report)
    if checks['shrinking']:
        violations = 0
        for before, after in zip(record.snapshots[:-1], record.snapshots[1:]):
            violations += int(np.count_nonzero(after.values > before.values))
        report.add_check('monotone_shrinking', violations, 0, 'cells', violations == 0)
    if checks['modulus']:
        modulus = modulus_check(u0, record)
        report.add_check('modulus_of_continuity', modulus.worst_violation, 1.0, 'cells', modulus.passed)
    if checks['level_tracking']:
        tracking = level_tracking_check(u0, ctx, checks['tracking_steps'])
        worst = max([count for _, _, count in tracking.mismatches] or [0])
        report.add_check('level_tracking', worst, 0, 'cells', tracking.passed)
    if checks['refinement']:
        study = h_refinement_study(u0, ctx, checks['refinement'], config.params.T)
        for h, gap in study:
            logger.info("refinement h=%r gap %.6g" % (h, gap))
        gaps = [gap for _, gap in study]
        growth = max([b - a for a, b in zip(gaps[:-1], gaps[1:])] + [0.0])
        report.add_check('h_refinement_gap_growth', growth, 0.0, 'sup-norm', gaps_nonincreasing(study))


def run(config, out_dir, threads=None):
    """
    Execute a run and write its artifacts (frames, radius.csv, report.txt) to out_dir.

    Returns the RunReport. Scheme errors propagate with their step and level.
    """
    started = time.time()
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    ctx = config.context(resolve_threads(threads))
    report = RunReport(config)
    initial = config.initial_condition()
    if config.outputs['weights']:
        config.perimeter.export_weights(os.path.join(out_dir, 'weights.csv'))
    if config.set_mode:
        if config.outputs['distance']:
            signed_distance(initial, config.anisotropy).export(os.path.join(out_dir, 'distance.csv'))
        _run_sets(config, ctx, initial, out_dir, report)
    else:
        _run_levels(config, ctx, initial, out_dir, report)
    report.wall_clock = time.time() - started
    with io.open(os.path.join(out_dir, 'report.txt'), 'w', encoding='utf-8') as f:
        f.write(six.text_type(report.render()))
    logger.info("run %s finished in %.1f s: %s" % (config.name, report.wall_clock,
                                                   "pass" if report.passed else "fail"))
    return report


###
#  verification suites
##
SuiteResult = namedtuple('SuiteResult', ['name', 'cases', 'failures', 'passed'])

QUICK = {'exhaustive': 20, 'comparison': 5, 'operator_laws': 3, 'perimeter': 50}
ACCEPTANCE = {'exhaustive': 200, 'comparison': 50, 'operator_laws': 20, 'perimeter': 1000}
EXHAUSTIVE_SHAPES = ((4, 4), (4, 5))


def _random_blob(rs, grid, margin, count=3, scale=0.25):
    """union of a few random disks kept clear of the margin band"""
    n = grid.nx
    E = CellSet.empty(grid)
    for _ in range(count):
        r = rs.uniform(1.5, scale * n) * grid.dx
        lo = (margin + 1) * grid.dx + r
        hi = (n - margin - 2) * grid.dx - r
        if hi <= lo:
            continue
        center = grid.cell_center((0, 0))
        center = (center[0] + rs.uniform(lo, hi), center[1] + rs.uniform(lo, hi))
        E = E.union(CellSet.disk(grid, center, r))
    return E.difference(CellSet(grid, grid.margin_mask(margin + 1)))


def check_exhaustive(rs, instances):
    """minimize_step against enumeration on random 4x4 and 4x5 instances"""
    J = PerimeterModel.crofton(8)
    failures = 0
    for i in range(instances):
        grid = Grid(*EXHAUSTIVE_SHAPES[i % len(EXHAUSTIVE_SHAPES)], dx=1.0)
        unary = rs.uniform(-3.0, 3.0, grid.shape)
        draw = rs.uniform(size=grid.shape)
        unary[draw < 0.1] = -np.inf
        unary[draw > 0.9] = np.inf
        se = StepEnergy(grid, J, unary)
        flow = minimize_step(se)
        oracle = enumerate_minimizers(se)
        if abs(flow.energy - oracle.energy) > 1e-9 or flow.minimal != oracle.minimal or \
                flow.maximal != oracle.maximal:
            failures += 1
    return SuiteResult('exhaustive_oracle', instances, failures, failures == 0)


def check_comparison(rs, pairs, threads=1):
    """nested pairs keep their order under T- and T+ for bounded, complement and mixed phases"""
    grid = Grid.centered(32, 32, 1.0 / 16)
    margin = 3
    models = [Nonlinearity(IDENTITY), Nonlinearity(CLAMP, M=2.0), Nonlinearity(POWER, gamma=1.0 / 3.0)]
    failures = 0
    cases = 0
    bounded = Phase()
    complement = Phase(BOUNDED_COMPLEMENT)
    for n in models:
        params = SchemeParams(0.01, 0.01, level_count=2, margin=margin)
        ctx = FlowContext(grid, PerimeterModel.crofton(16), Anisotropy(), n, Forcing(), params, threads)
        for _ in range(pairs):
            B = _random_blob(rs, grid, margin)
            A = B.intersection(_random_blob(rs, grid, margin, count=4, scale=0.4))
            C = _random_blob(rs, grid, margin).difference(A)
            for E1, E2, p1, p2 in ((A, B, bounded, bounded),
                                   (B.complement(), A.complement(), complement, complement),
                                   (A, C.complement(), bounded, complement)):
                report = comparison_check(E1, E2, ctx, 0, p1, p2)
                cases += 1
                if not (report.minimal and report.maximal):
                    failures += 1
    return SuiteResult('comparison_principle', cases, failures, failures == 0)


def _random_level_function(rs, grid, margin, L):
    """level-aligned random function: values k / L, zero on and near the margin band"""
    values = np.zeros(grid.shape)
    inner = slice(margin + 3, grid.nx - margin - 3)
    values[inner, inner] = rs.randint(0, L + 1, size=values[inner, inner].shape) / float(L)
    return LevelFunction(grid, values, 0.0, 1.0)


def check_operator_laws(rs, pairs, threads=1):
    """monotonicity, constant commutation and shift equivariance of lift_step"""
    grid = Grid.centered(24, 24, 1.0 / 16)
    L = 8
    params = SchemeParams(0.01, 0.01, level_count=L, margin=3)
    ctx = FlowContext(grid, PerimeterModel.crofton(16), Anisotropy(), Nonlinearity(), Forcing(), params, threads)
    failures = 0
    for _ in range(pairs):
        u = _random_level_function(rs, grid, 3, L)
        bump = _random_level_function(rs, grid, 3, L)
        v = LevelFunction(grid, np.minimum(u.values + bump.values, 1.0), 0.0, 1.0)
        report = operator_law_check(u, v, ctx, 0, (1, -2), 0.25)
        if not all(report):
            failures += 1
    return SuiteResult('operator_laws', pairs, failures, failures == 0)


def check_perimeter(rs, pairs):
    """submodularity and translation invariance of the Crofton and fractional perimeters"""
    grid = Grid.centered(32, 32, 1.0 / 32)
    models = [PerimeterModel.crofton(16), PerimeterModel.fractional(0.5, 3, grid.dx)]
    failures = 0
    for J in models:
        for _ in range(pairs):
            E = CellSet(grid, rs.uniform(size=grid.shape) < 0.5)
            F = CellSet(grid, rs.uniform(size=grid.shape) < 0.5)
            if not submodularity_check(J, E, F):
                failures += 1
            blob = _random_blob(rs, grid, 4)
            v = (rs.randint(-3, 4), rs.randint(-3, 4))
            if perimeter_energy(J, blob.shift(v)) != perimeter_energy(J, blob):
                failures += 1
    return SuiteResult('perimeter_properties', 2 * pairs * len(models), failures, failures == 0)


def verify(suite, seed=0, threads=None, out_dir=None):
    """
    Run a verification suite and return [SuiteResult].

    quick:          property checks at reduced counts
    acceptance:     property checks at full counts plus every preset run
    """
    if suite not in ('quick', 'acceptance'):
        raise ConfigError("suite: must be quick or acceptance (got %r)" % suite)
    threads = resolve_threads(threads)
    counts = QUICK if suite == 'quick' else ACCEPTANCE
    rs = np.random.RandomState(seed)
    results = [check_exhaustive(rs, counts['exhaustive']),
               check_comparison(rs, counts['comparison'], threads),
               check_operator_laws(rs, counts['operator_laws'], threads),
               check_perimeter(rs, counts['perimeter'])]
    if suite == 'acceptance':
        out_dir = out_dir or tempfile.mkdtemp(prefix='mmflow-verify-')
        for name in sorted(preset_registry.presets):
            report = run(preset(name), os.path.join(out_dir, name), threads)
            failed = [check for check in report.checks if not check.passed]
            failures = len(failed)
            for check in failed:
                logger.warning("preset %s: %s failed (value %.4g %s, tolerance %.4g)"
                               % (name, check.name, check.value, check.unit, check.tolerance))
            results.append(SuiteResult(name, len(report.checks), failures, report.passed))
    return results


###
#  main
##
def main(argv=None):
    parser = argparse.ArgumentParser(prog='mmflow', description='minimizing-movements curvature flows')
    parser.add_argument('--threads', type=int, default=None, help='level solve workers (MMFLOW_THREADS)')
    parser.add_argument('--seed', type=int, default=0, help='seed of the randomized verification suites')
    parser.add_argument('--verbose', action='store_true', help='log solver statistics')
    commands = parser.add_subparsers(dest='command')

    run_parser = commands.add_parser('run', help='run a configuration file')
    run_parser.add_argument('--config', required=True)
    run_parser.add_argument('--out', required=True)

    preset_parser = commands.add_parser('preset', help='run a named preset')
    preset_parser.add_argument('--name')
    preset_parser.add_argument('--out')
    preset_parser.add_argument('--list', action='store_true')

    verify_parser = commands.add_parser('verify', help='run a verification suite')
    verify_parser.add_argument('--suite', choices=['quick', 'acceptance'], default='quick')
    verify_parser.add_argument('--out')

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.command == 'run':
            with io.open(args.config, encoding='utf-8') as f:
                config = parse_config(f.read(), name=os.path.basename(args.config))
            report = run(config, args.out, args.threads)
            print(report.render())
            return 0 if report.passed else 1
        if args.command == 'preset':
            if args.list or not args.name:
                print(preset_registry.help())
                return 0 if args.list else 2
            if not args.out:
                parser.error("preset needs --out")
            report = run(preset(args.name), args.out, args.threads)
            print(report.render())
            return 0 if report.passed else 1
        results = verify(args.suite, args.seed, args.threads, args.out)
        table = [['suite', 'cases', 'failures', 'verdict']]
        table.extend([r.name, r.cases, r.failures, "pass" if r.passed else "FAIL"] for r in results)
        print(tabulate(table, headers='firstrow'))
        return 0 if all(r.passed for r in results) else 1
    except preset_registry.UnknownPreset as e:
        sys.stderr.write("mmflow: %s\n" % e)
        return 2
    except MMFlowError as e:
        sys.stderr.write("mmflow: %s\n" % e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
