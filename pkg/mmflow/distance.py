"""
mmflow distances

Anisotropic signed distance on the grid, measured between cell centers with the
polar function of the mobility, its brute-force oracle and level bands.

Copyright (C) 2026 mmflow developers
"""

import logging

import numpy as np
import six
from scipy import ndimage

from .common import DegenerateSetError, GridTooLarge
from .core import MAX_NORM, WEIGHTED_EUCLIDEAN, CellSet

logger = logging.getLogger(__name__)


BRUTEFORCE_LIMIT = 64

# chunk size for pairwise site distances
_CHUNK = 512


###
#  DistanceField
##
@six.python_2_unicode_compatible
class DistanceField(object):
    """
    Signed psi-distance of a set, one value per cell in length units.

    grid (Grid):                the grid
    values (ndarray):           negative exactly on cells of source, positive elsewhere
    source (CellSet):           the set the distances were measured from
    anisotropy (Anisotropy):    the mobility whose polar measures distance
    """

    def __init__(self, grid, values, source, anisotropy):
        values = np.array(values, dtype=float)
        values.flags.writeable = False
        self.grid = grid
        self.values = values
        self.source = source
        self.anisotropy = anisotropy

    def export(self, path):
        """write the field as a CSV grid, one row per i"""
        np.savetxt(path, self.values, delimiter=',', fmt='%.17g')
        logger.info("wrote distance field to %s" % path)

    def __str__(self):
        return "DistanceField (%s of %s)" % (self.anisotropy, self.source)

    def __repr__(self):
        return self.__str__()


def _check_proper(E):
    if E.is_empty() or E.is_full():
        raise DegenerateSetError("signed distance needs a set that is neither empty nor full (%s)" % E)


def _site_distance(grid, a, cells, sites):
    """min over sites of psi°(x_cell - x_site) for each cell; cells and sites are (n, 2) index arrays"""
    out = np.full(len(cells), np.inf)
    site_xy = sites * grid.dx
    for start in range(0, len(cells), _CHUNK):
        chunk = cells[start:start + _CHUNK] * grid.dx
        diff = chunk[:, None, :] - site_xy[None, :, :]
        out[start:start + _CHUNK] = a.polar(diff).min(axis=1)
    return out


def _one_sided(region, a):
    """
    psi-distance from every cell of region to the nearest cell center of its complement,
    0 off region

    The polar of every supported mobility is a Euclidean norm with per-axis sampling or
    the taxicab norm, so one exact transform of the membership mask gives the field.
    """
    grid = region.grid
    if a.kind == MAX_NORM:
        values = ndimage.distance_transform_cdt(region.membership, metric='taxicab') * grid.dx
    elif a.kind == WEIGHTED_EUCLIDEAN:
        sampling = (grid.dx / np.sqrt(a.weights[0]), grid.dx / np.sqrt(a.weights[1]))
        values = ndimage.distance_transform_edt(region.membership, sampling=sampling)
    else:
        values = ndimage.distance_transform_edt(region.membership) * grid.dx
    return np.where(region.membership, values, 0.0)


def signed_distance(E, a):
    """
    Signed psi-distance of E: dist to E outside E, minus dist to the complement inside.

    E (CellSet):                neither empty nor full
    a (Anisotropy):             the mobility, distances use its polar

    Returns a DistanceField, exact between cell centers on the whole grid.
    """
    _check_proper(E)
    outer = _one_sided(E.complement(), a)
    inner = _one_sided(E, a)
    logger.debug("signed distance of %s under %s" % (E, a))
    return DistanceField(E.grid, outer - inner, E, a)


def signed_distance_bruteforce(E, a):
    """exact signed psi-distance by minimizing over every cell pair; grids up to 64x64"""
    grid = E.grid
    if grid.nx > BRUTEFORCE_LIMIT or grid.ny > BRUTEFORCE_LIMIT:
        raise GridTooLarge("brute-force distance is limited to %dx%d grids (got %s)" %
                           (BRUTEFORCE_LIMIT, BRUTEFORCE_LIMIT, grid))
    _check_proper(E)
    inside = np.argwhere(E.membership)
    outside = np.argwhere(~E.membership)
    values = np.zeros(grid.shape)
    values[outside[:, 0], outside[:, 1]] = _site_distance(grid, a, outside, inside)
    values[inside[:, 0], inside[:, 1]] = -_site_distance(grid, a, inside, outside)
    return DistanceField(grid, values, E, a)


def level_band(d, delta):
    """return the cells with d <= delta; -inf gives the empty set and +inf the full grid"""
    if delta == float('-inf'):
        return CellSet.empty(d.grid)
    if delta == float('inf'):
        return CellSet.full(d.grid)
    return CellSet(d.grid, d.values <= delta)
