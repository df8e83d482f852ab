# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Raster images of maps and trajectories.

A :class:`RasterGrid` stores ``data[channel, row, col]`` where ``row`` indexes
the y axis and ``col`` the x axis, both counted from the extent origin. Row 0
is the southern edge; image files are written north-up.
"""

import dataclasses
import os

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ParseError, ValidationError
from .geodata import MAJOR, Trajectory
from .logger import get_logger

logger = get_logger(__name__)

MIN_SIDE = 8
EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclasses.dataclass(frozen=True, eq=False)
class RasterGrid(object):
    """Multi-channel square image on an extent's cell grid.

    :type extent: :class:`trajsynth.geodata.Extent`
    :param extent: Grid geometry; ``N = extent.n``.

    :type data: numpy.ndarray
    :param data: ``(channels, N, N)`` values in [0, 1].
    """

    extent: object
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[np.newaxis]
        n = self.extent.n
        if data.ndim != 3 or data.shape[1:] != (n, n):
            raise ValidationError({
                'message': 'Raster shape does not match the extent',
                'data': 'shape=%s, N=%d' % (data.shape, n)})
        if n < MIN_SIDE:
            raise ValidationError('Raster side must be at least %d cells, '
                                  'got %d' % (MIN_SIDE, n))
        if not np.all(np.isfinite(data)) or data.min() < 0 or data.max() > 1:
            raise ValidationError('Raster values must lie in [0, 1]')
        object.__setattr__(self, 'data', data)

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def side(self):
        return self.data.shape[1]

    def __eq__(self, other):
        return (isinstance(other, RasterGrid) and
                self.extent == other.extent and
                np.array_equal(self.data, other.data))

    __hash__ = None

    def is_binary(self):
        return bool(np.all((self.data == 0) | (self.data == 1)))

    def popcount(self):
        return int(np.count_nonzero(self.data))

    def cells(self, channel=0):
        """Set of ``(row, col)`` cells that are nonzero in ``channel``."""

        rows, cols = np.nonzero(self.data[channel])
        return set(zip(rows.tolist(), cols.tolist()))


def line_cells(r0, c0, r1, c1, four_connected=False):
    """Cells on the discrete line from ``(r0, c0)`` to ``(r1, c1)``.

    Plain Bresenham yields an 8-connected line. With ``four_connected`` an
    extra cell is inserted at every diagonal step.

    :rtype: list
    :return: List of ``(row, col)``, both endpoints included.
    """

    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    cells = [(r, c)]
    while (r, c) != (r1, c1):
        e2 = 2 * err
        step_c = e2 > -dr
        step_r = e2 < dc
        if step_c and step_r and four_connected:
            cells.append((r, c + sc))
        if step_c:
            err -= dr
            c += sc
        if step_r:
            err += dc
            r += sr
        cells.append((r, c))
    return cells


def point_to_cell(extent, x, y):
    """Cell ``(row, col)`` holding ``(x, y)``; the upper edge clamps to
    ``N - 1``."""

    n = extent.n
    col = int(np.floor((x - extent.origin_x) / extent.cell_size))
    row = int(np.floor((y - extent.origin_y) / extent.cell_size))
    return min(max(row, 0), n - 1), min(max(col, 0), n - 1)


def _draw_polyline(canvas, extent, points, four_connected):
    cells = [point_to_cell(extent, x, y) for x, y in points]
    canvas[cells[0]] = 1.0
    for (r0, c0), (r1, c1) in zip(cells[:-1], cells[1:]):
        for cell in line_cells(r0, c0, r1, c1, four_connected):
            canvas[cell] = 1.0


def rasterize_trajectory(traj, extent):
    """Binary 1-channel image of a trajectory.

    Consecutive points are joined with 8-connected lines.

    :type traj: :class:`trajsynth.geodata.Trajectory`
    :param traj: Trajectory inside ``extent``.

    :type extent: :class:`trajsynth.geodata.Extent`
    :param extent: Grid geometry.

    :rtype: :class:`RasterGrid`
    """

    if not traj.within(extent):
        raise ValidationError('Trajectory %r lies outside the extent' % traj)
    canvas = np.zeros((extent.n, extent.n))
    _draw_polyline(canvas, extent, traj.points, four_connected=False)
    return RasterGrid(extent, canvas[np.newaxis])


def rasterize_map(street_map):
    """Binary 2-channel image of a street map.

    Channel 0 holds major roads, channel 1 minor roads, one cell wide. Roads
    are drawn 4-connected so that the street cells of connected roads form
    one 4-connected component.

    :rtype: :class:`RasterGrid`
    """

    extent = street_map.extent
    canvas = np.zeros((2, extent.n, extent.n))
    for road in street_map.roads:
        channel = 0 if road.road_class == MAJOR else 1
        _draw_polyline(canvas[channel], extent, road.points,
                       four_connected=True)
    logger.debug("Map rasterized: %s", canvas)
    return RasterGrid(extent, canvas)


def street_mask(map_raster):
    """Cells set in either channel of a 2-channel map raster.

    :rtype: :class:`RasterGrid`
    """

    if map_raster.channels != 2:
        raise ValidationError({
            'message': 'street_mask needs a 2-channel map raster',
            'data': 'channels=%d' % map_raster.channels})
    mask = np.logical_or(map_raster.data[0] > 0, map_raster.data[1] > 0)
    return RasterGrid(map_raster.extent, mask[np.newaxis].astype(np.float64))


def largest_component(mask, structure=EIGHT_CONNECTED):
    """Boolean mask of the largest connected component of ``mask``.

    Ties go to the component containing the first cell in scan order.
    """

    labels, count = ndimage.label(mask, structure=structure)
    if count == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def image_to_trajectory(img, threshold=0.5, extent=None, point_interval=None):
    """Ordered trajectory from a 1-channel raster.

    The image is binarized at ``threshold`` and reduced to its largest
    8-connected component. The walk starts at the topmost-leftmost cell
    with exactly one neighbor, or the topmost-leftmost cell if there is none,
    and repeatedly moves to the nearest unvisited cell.

    :type img: :class:`RasterGrid`
    :param img: Generated or rasterized trajectory image.

    :type threshold: float
    :param threshold: Cells with values ``>= threshold`` are set.

    :type extent: :class:`trajsynth.geodata.Extent`
    :param extent: Geometry of the output. Default: ``img.extent``.

    :rtype: :class:`trajsynth.geodata.Trajectory`
    :return: One point per component cell, at cell centers.
    """

    if img.channels != 1:
        raise ValidationError('image_to_trajectory needs a 1-channel raster')
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError('threshold must lie in [0, 1]')
    extent = extent or img.extent

    component = largest_component(img.data[0] >= threshold)
    if not component.any():
        raise ValidationError({'message': 'Empty raster after thresholding',
                               'data': 'threshold=%s' % threshold})

    degree = ndimage.convolve(component.astype(int), EIGHT_CONNECTED,
                              mode='constant') - 1
    cells = np.argwhere(component)
    # Topmost-leftmost first; row 0 is the southern edge.
    cells = cells[np.lexsort((cells[:, 1], -cells[:, 0]))]
    ends = cells[degree[cells[:, 0], cells[:, 1]] == 1]
    start = tuple(ends[0]) if len(ends) else tuple(cells[0])

    remaining = np.ones(len(cells), dtype=bool)
    current = np.array(start)
    order = []
    for _ in range(len(cells)):
        d2 = np.sum((cells - current) ** 2, axis=1).astype(np.float64)
        d2[~remaining] = np.inf
        index = int(np.argmin(d2))
        remaining[index] = False
        current = cells[index]
        order.append(extent.cell_center(int(current[0]), int(current[1])))

    logger.debug("Recovered %d points from raster", len(order))
    return Trajectory(order, point_interval)


def dihedral_transform(grid, element):
    """Apply one of the 8 symmetries of the square to every channel.

    Element ``e`` flips the columns when ``e >= 4`` and then rotates by
    ``(e % 4) * 90`` degrees counter-clockwise. Element 0 is the identity.

    :rtype: :class:`RasterGrid`
    """

    if element not in range(8):
        raise ValidationError('Dihedral element must be in 0..7')
    data = grid.data
    if element >= 4:
        data = np.flip(data, axis=2)
    data = np.rot90(data, k=element % 4, axes=(1, 2))
    return RasterGrid(grid.extent, np.ascontiguousarray(data))


def dihedral_compose(a, b):
    """Element equal to applying ``b`` first and then ``a``."""

    ka, fa = a % 4, a // 4
    kb, fb = b % 4, b // 4
    sign = -1 if fa else 1
    return (ka + sign * kb) % 4 + 4 * (fa ^ fb)


def dihedral_inverse(element):
    k, f = element % 4, element // 4
    return element if f else (-k) % 4


def _to_image(channel):
    pixels = np.flipud(np.round(channel * 255)).astype(np.uint8)
    return Image.fromarray(np.ascontiguousarray(pixels))


def write_pgm(grid, stem):
    """Write one 8-bit PGM per channel as ``<stem>.ch<k>.pgm``.

    :rtype: list
    :return: Written paths.
    """

    paths = []
    for k in range(grid.channels):
        path = '%s.ch%d.pgm' % (stem, k)
        _to_image(grid.data[k]).save(path, format='PPM')
        paths.append(path)
    logger.debug("Raster written: %s", paths)
    return paths


def read_pgm(stem, extent):
    """Read the ``<stem>.ch<k>.pgm`` files written by :func:`write_pgm`.

    :rtype: :class:`RasterGrid`
    """

    channels = []
    while os.path.exists('%s.ch%d.pgm' % (stem, len(channels))):
        path = '%s.ch%d.pgm' % (stem, len(channels))
        try:
            with Image.open(path) as image:
                pixels = np.asarray(image.convert('L'), dtype=np.float64)
        except OSError as e:
            raise ParseError({'message': 'Unable to read raster',
                              'data': '%s: %s' % (path, e)})
        channels.append(np.flipud(pixels) / 255.0)
    if not channels:
        raise ParseError('No raster files found for stem %s' % stem)
    return RasterGrid(extent, np.stack(channels))


def render_png(grid, path, overlay=None):
    """Render a raster as a lossless grayscale PNG, north up.

    Channels are merged by maximum and scaled to the brightest cell. Cells
    set in ``overlay`` (a 1-channel raster on the same grid) are drawn at
    full intensity over a dimmed background.
    """

    merged = grid.data.max(axis=0)
    peak = merged.max()
    if peak > 0:
        merged = merged / peak
    if overlay is not None:
        merged = 0.5 * merged
        merged[overlay.data[0] > 0] = 1.0
    _to_image(merged).save(path, format='PNG')
    return path
