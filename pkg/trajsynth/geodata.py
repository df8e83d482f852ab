# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Street maps, trajectories and datasets.

Coordinates are meters relative to the map's frame; an :class:`Extent` is
the square the raster grid is laid on. All coordinates are quantized to
0.01 m so that files written by :func:`save_map` and
:func:`save_trajectories` load back to identical values.
"""

import csv
import dataclasses
import json
import math

import networkx as nx
import numpy as np

from .config import default_point_interval
from .errors import ParseError, ValidationError
from .logger import get_logger

logger = get_logger(__name__)

MAJOR = 'major'
MINOR = 'minor'
TRAIN = 'train'
TEST = 'test'

# OpenStreetMap-style highway tags. Anything not listed is a minor road.
ROAD_CLASS_TABLE = {
    'major': MAJOR,
    'motorway': MAJOR,
    'trunk': MAJOR,
    'primary': MAJOR,
    'secondary': MAJOR,
}

# Cost of entering a street cell when synthesizing ground truth.
CLASS_COST = {MAJOR: 1.0, MINOR: 3.0}

TRAJECTORY_HEADER = ['traj_id', 'seq', 'x', 'y']


def road_class(tag):
    """Map a road tag to :data:`MAJOR` or :data:`MINOR`."""

    return ROAD_CLASS_TABLE.get(str(tag).strip().lower(), MINOR)


def quantize(values):
    """Round coordinates to the 0.01 m storage resolution."""

    return np.round(np.asarray(values, dtype=np.float64) * 100.0) / 100.0


def child_seed(seed, index):
    """Independent integer seed for stream ``index`` of ``seed``."""

    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(1)
    return int(state[0])


@dataclasses.dataclass(frozen=True)
class Extent(object):
    """Square area covered by a raster grid.

    :type origin_x: float
    :param origin_x: Lower-left corner, meters.

    :type origin_y: float
    :param origin_y: Lower-left corner, meters.

    :type side: float
    :param side: Side length, meters; an integer multiple of ``cell_size``.

    :type cell_size: float
    :param cell_size: Raster cell edge, meters.
    """

    origin_x: float
    origin_y: float
    side: float
    cell_size: float

    def __post_init__(self):
        if not self.side > 0 or not self.cell_size > 0:
            raise ValidationError({
                'message': 'Extent side and cell size must be positive',
                'data': 'side=%s, cell_size=%s' % (self.side, self.cell_size)})
        ratio = self.side / self.cell_size
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError({
                'message': 'Extent side must be a multiple of the cell size',
                'data': 'side=%s, cell_size=%s' % (self.side, self.cell_size)})

    @property
    def n(self):
        """Cells per side."""
        return int(round(self.side / self.cell_size))

    @property
    def x_max(self):
        return self.origin_x + self.side

    @property
    def y_max(self):
        return self.origin_y + self.side

    def contains(self, points):
        """Elementwise containment test, upper edges included.

        :type points: array-like
        :param points: ``(n, 2)`` coordinates.

        :rtype: numpy.ndarray
        :return: Boolean array of length ``n``.
        """

        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return ((pts[:, 0] >= self.origin_x) & (pts[:, 0] <= self.x_max) &
                (pts[:, 1] >= self.origin_y) & (pts[:, 1] <= self.y_max))

    def overlaps(self, other):
        """True if the interiors of the two squares intersect."""

        return (self.origin_x < other.x_max and other.origin_x < self.x_max and
                self.origin_y < other.y_max and other.origin_y < self.y_max)

    def cell_center(self, row, col):
        """Center of raster cell ``(row, col)``; row indexes y, col x."""

        return (self.origin_x + (col + 0.5) * self.cell_size,
                self.origin_y + (row + 0.5) * self.cell_size)

    def to_dict(self):
        return {'origin_x': self.origin_x, 'origin_y': self.origin_y,
                'side': self.side, 'cell_size': self.cell_size}

    @classmethod
    def from_dict(cls, values):
        return cls(float(values['origin_x']), float(values['origin_y']),
                   float(values['side']), float(values['cell_size']))


@dataclasses.dataclass(frozen=True, eq=False)
class Road(object):
    """One class-tagged polyline.

    :type points: numpy.ndarray
    :param points: ``(n, 2)`` vertices, ``n >= 2``.

    :type road_class: str
    :param road_class: :data:`MAJOR` or :data:`MINOR`.
    """

    points: np.ndarray
    road_class: str = MINOR

    def __post_init__(self):
        pts = quantize(self.points).reshape(-1, 2)
        if len(pts) < 2:
            raise ValidationError('A road needs at least 2 vertices')
        if self.road_class not in (MAJOR, MINOR):
            raise ValidationError('Unknown road class: %s' % self.road_class)
        pts.setflags(write=False)
        object.__setattr__(self, 'points', pts)

    def __eq__(self, other):
        return (isinstance(other, Road) and
                self.road_class == other.road_class and
                np.array_equal(self.points, other.points))

    def length(self):
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0),
                                           axis=1)))


@dataclasses.dataclass(frozen=True)
class StreetMap(object):
    """Street map: an extent plus major and minor roads.

    :type extent: :class:`Extent`
    :param extent: Area covered; every vertex lies inside.

    :type roads: tuple
    :param roads: Tuple of :class:`Road`.
    """

    extent: Extent
    roads: tuple = ()

    def __post_init__(self):
        roads = tuple(self.roads)
        for index, road in enumerate(roads):
            outside = ~self.extent.contains(road.points)
            if outside.any():
                raise ValidationError({
                    'message': 'Road vertex outside the map extent',
                    'data': 'road %d, vertex %s' % (
                        index, road.points[np.argmax(outside)].tolist())})
        object.__setattr__(self, 'roads', roads)

    def roads_of(self, cls):
        return [road for road in self.roads if road.road_class == cls]

    def to_dict(self):
        return {'extent': self.extent.to_dict(),
                'roads': [{'class': road.road_class,
                           'points': road.points.tolist()}
                          for road in self.roads]}


class Trajectory(object):
    """Ordered sequence of positions in meters.

    :type points: array-like
    :param points: ``(n, 2)`` coordinates, ``n >= 1``.

    :type point_interval: float
    :param point_interval: Seconds between consecutive points. Default:
        :func:`trajsynth.config.default_point_interval`.

    :type traj_id: str
    :param traj_id: Optional identifier used in CSV files.

    >>> from trajsynth.geodata import Trajectory
    >>> len(Trajectory([(0, 0), (10, 0)]))
    2
    """

    def __init__(self, points, point_interval=None, traj_id=None):
        pts = quantize(points).reshape(-1, 2)
        if len(pts) < 1:
            raise ValidationError('A trajectory needs at least 1 point')
        if point_interval is None:
            point_interval = default_point_interval()
        if not point_interval > 0:
            raise ValidationError('point_interval must be positive')
        pts.setflags(write=False)
        self.points = pts
        self.point_interval = float(point_interval)
        self.traj_id = traj_id

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return (isinstance(other, Trajectory) and
                self.point_interval == other.point_interval and
                np.array_equal(self.points, other.points))

    def __ne__(self, other):
        return not self == other

    __hash__ = None

    def __repr__(self):
        return 'Trajectory(id=%r, points=%d, interval=%s)' % (
            self.traj_id, len(self.points), self.point_interval)

    def within(self, extent):
        return bool(extent.contains(self.points).all())


@dataclasses.dataclass(frozen=True)
class Dataset(object):
    """Maps with their trajectories, tagged as one split.

    :type entries: tuple
    :param entries: Tuple of ``(StreetMap, tuple of Trajectory)``.

    :type split_tag: str
    :param split_tag: :data:`TRAIN` or :data:`TEST`.
    """

    entries: tuple
    split_tag: str = TRAIN

    def __post_init__(self):
        if self.split_tag not in (TRAIN, TEST):
            raise ValidationError('Unknown split tag: %s' % self.split_tag)
        entries = tuple((m, tuple(trajs)) for m, trajs in self.entries)
        for street_map, trajs in entries:
            for traj in trajs:
                if not traj.within(street_map.extent):
                    raise ValidationError(
                        'Trajectory %r lies outside its map extent' % traj)
        object.__setattr__(self, 'entries', entries)

    def __len__(self):
        return len(self.entries)

    def trajectory_count(self):
        return sum(len(trajs) for _, trajs in self.entries)


def load_map(path):
    """Load a street map JSON file.

    Road classes are mapped through :data:`ROAD_CLASS_TABLE`.

    :type path: str
    :param path: Path to the map file.

    :rtype: :class:`StreetMap`
    """

    try:
        with open(path, 'r') as f:
            data = json.load(f)
        extent = Extent.from_dict(data['extent'])
        raw_roads = [(r['points'], r.get('class', MINOR))
                     for r in data['roads']]
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ParseError({'message': 'Unable to parse map file',
                          'data': '%s: %s' % (path, e)})

    roads = []
    for points, tag in raw_roads:
        try:
            pts = np.asarray(points, dtype=np.float64)
        except (ValueError, TypeError) as e:
            raise ParseError({'message': 'Bad road coordinates',
                              'data': '%s: %s' % (path, e)})
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ParseError('Road points must be [x, y] pairs: %s' % path)
        roads.append(Road(pts, road_class(tag)))

    street_map = StreetMap(extent, tuple(roads))
    logger.debug("Map loaded from %s: %d roads", path, len(roads))
    return street_map


def save_map(street_map, path):
    """Write a street map JSON file. Output is byte-stable."""

    with open(path, 'w') as f:
        json.dump(street_map.to_dict(), f, sort_keys=True)
        f.write('\n')


def load_trajectories(path, extent, point_interval=None):
    """Load trajectories from a `traj_id,seq,x,y` CSV file.

    :type path: str
    :param path: Path to the CSV file.

    :type extent: :class:`Extent`
    :param extent: Every point must lie inside.

    :rtype: list
    :return: List of :class:`Trajectory`, in order of first appearance.
    """

    groups = {}
    try:
        with open(path, 'r', newline='') as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != \
                    TRAJECTORY_HEADER:
                raise ParseError({'message': 'Bad trajectory header',
                                  'data': '%s: %s' % (path, header)})
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise ParseError({'message': 'Bad trajectory row',
                                      'data': '%s:%d' % (path, lineno)})
                try:
                    seq, x, y = int(row[1]), float(row[2]), float(row[3])
                except ValueError as e:
                    raise ParseError({'message': 'Bad trajectory row',
                                      'data': '%s:%d: %s' % (path, lineno, e)})
                groups.setdefault(row[0], []).append((seq, x, y))
    except OSError as e:
        raise ParseError({'message': 'Unable to read trajectory file',
                          'data': '%s: %s' % (path, e)})

    result = []
    for traj_id, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        seqs = [r[0] for r in rows]
        if seqs != list(range(len(rows))):
            raise ValidationError({
                'message': 'Non-contiguous sequence numbers',
                'data': 'trajectory %s' % traj_id})
        points = np.array([(r[1], r[2]) for r in rows])
        outside = ~extent.contains(points)
        if outside.any():
            raise ValidationError({
                'message': 'Trajectory point outside the extent',
                'data': 'trajectory %s, point %s' % (
                    traj_id, points[np.argmax(outside)].tolist())})
        result.append(Trajectory(points, point_interval, traj_id=traj_id))

    logger.debug("Loaded %d trajectories from %s", len(result), path)
    return result


def save_trajectories(trajectories, path):
    """Write trajectories as a `traj_id,seq,x,y` CSV file.

    Trajectories without an id are named ``t<index>``.
    """

    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(TRAJECTORY_HEADER)
        for index, traj in enumerate(trajectories):
            traj_id = traj.traj_id if traj.traj_id is not None \
                else 't%d' % index
            for seq, (x, y) in enumerate(traj.points):
                writer.writerow([traj_id, seq, '%.2f' % x, '%.2f' % y])


def resample(traj, count):
    """Re-parametrize ``traj`` by arc length to exactly ``count`` points.

    The first and last points are kept; a stationary trajectory repeats its
    single position.
    """

    if count < 1:
        raise ValidationError('count must be at least 1')
    pts = traj.points
    if len(pts) == 1:
        return Trajectory(np.repeat(pts, count, axis=0), traj.point_interval,
                          traj.traj_id)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] == 0:
        return Trajectory(np.repeat(pts[:1], count, axis=0),
                          traj.point_interval, traj.traj_id)
    target = np.linspace(0.0, arc[-1], count)
    x = np.interp(target, arc, pts[:, 0])
    y = np.interp(target, arc, pts[:, 1])
    return Trajectory(np.stack([x, y], axis=1), traj.point_interval,
                      traj.traj_id)


def synth_map(seed, extent, grid_pitch, diagonal_count):
    """Generate a connected synthetic street map.

    An axis-aligned grid of minor roads at ``grid_pitch``, about a third of
    the grid lines promoted to major, plus ``diagonal_count`` minor chords
    whose endpoints lie on grid lines.

    :type seed: int
    :param seed: Random seed; the map is a pure function of the arguments.

    :type extent: :class:`Extent`
    :param extent: Area to fill.

    :type grid_pitch: float
    :param grid_pitch: Distance between parallel grid roads, at least two
        cells.

    :type diagonal_count: int
    :param diagonal_count: Number of random chords.

    :rtype: :class:`StreetMap`
    """

    if grid_pitch < 2 * extent.cell_size:
        raise ValidationError({
            'message': 'grid_pitch must be at least two cells',
            'data': 'grid_pitch=%s, cell_size=%s' % (grid_pitch,
                                                     extent.cell_size)})
    if diagonal_count < 0:
        raise ValidationError('diagonal_count must be non-negative')

    rng = np.random.default_rng(seed)
    offsets = [k * grid_pitch
               for k in range(int(math.floor(extent.side / grid_pitch)) + 1)]
    n_lines = len(offsets)
    n_major = max(1, n_lines // 3)
    major_v = set(rng.choice(n_lines, size=n_major, replace=False).tolist())
    major_h = set(rng.choice(n_lines, size=n_major, replace=False).tolist())

    x0, y0 = extent.origin_x, extent.origin_y
    roads = []
    for k, off in enumerate(offsets):
        cls = MAJOR if k in major_v else MINOR
        roads.append(Road([(x0 + off, y0), (x0 + off, extent.y_max)], cls))
    for k, off in enumerate(offsets):
        cls = MAJOR if k in major_h else MINOR
        roads.append(Road([(x0, y0 + off), (extent.x_max, y0 + off)], cls))

    for _ in range(diagonal_count):
        # One endpoint on a vertical road, the other on a horizontal one.
        ax = x0 + offsets[rng.integers(n_lines)]
        ay = y0 + rng.uniform(0, extent.side)
        bx = x0 + rng.uniform(0, extent.side)
        by = y0 + offsets[rng.integers(n_lines)]
        if abs(ax - bx) < extent.cell_size and abs(ay - by) < extent.cell_size:
            continue
        roads.append(Road([(ax, ay), (bx, by)], MINOR))

    logger.debug("Synthetic map (seed=%s): %d grid lines per axis, %d roads",
                 seed, n_lines, len(roads))
    return StreetMap(extent, tuple(roads))


def street_graph(street_map):
    """4-connected graph of street cells weighted by road class.

    Entering a major cell costs 1, a minor cell 3; the edge weight is the
    mean of its two cells' costs.

    :rtype: networkx.Graph
    """

    from .raster import rasterize_map

    grid = rasterize_map(street_map)
    major = grid.data[0] > 0
    street = (grid.data[0] > 0) | (grid.data[1] > 0)
    cost = np.where(major, CLASS_COST[MAJOR], CLASS_COST[MINOR])

    graph = nx.Graph()
    rows, cols = np.nonzero(street)
    for r, c in zip(rows.tolist(), cols.tolist()):
        graph.add_node((r, c), major=bool(major[r, c]))
    n = street.shape[0]
    for r, c in zip(rows.tolist(), cols.tolist()):
        for dr, dc in ((1, 0), (0, 1)):
            rr, cc = r + dr, c + dc
            if rr < n and cc < n and street[rr, cc]:
                graph.add_edge((r, c), (rr, cc),
                               weight=0.5 * (cost[r, c] + cost[rr, cc]))
    return graph


def synth_trajectories(street_map, count, seed, point_interval=None):
    """Generate ground-truth trajectories on a street map.

    Each trajectory is a class-weighted shortest street path between two
    random street cells, emitted as cell centers. Endpoint pairs that are
    identical or unreachable are redrawn.

    :rtype: list
    :return: List of :class:`Trajectory`.
    """

    if count <= 0:
        return []

    graph = street_graph(street_map)
    if graph.number_of_nodes() == 0:
        raise ValidationError('Street map has no street cells')
    nodes = max(nx.connected_components(graph), key=len)
    nodes = sorted(nodes)
    if len(nodes) < 2:
        raise ValidationError('Street map has a single street cell')

    rng = np.random.default_rng(seed)
    extent = street_map.extent
    result = []
    while len(result) < count:
        a, b = rng.integers(len(nodes), size=2)
        if a == b:
            continue
        try:
            path = nx.dijkstra_path(graph, nodes[a], nodes[b], weight='weight')
        except nx.NetworkXNoPath:
            logger.debug("Unreachable pair %s -> %s, redrawn",
                         nodes[a], nodes[b])
            continue
        points = [extent.cell_center(r, c) for r, c in path]
        result.append(Trajectory(points, point_interval,
                                 traj_id='t%d' % len(result)))
    return result


def spatial_split(datasets, boundary, axis='x'):
    """Split maps into spatially disjoint train and test sets.

    Entries whose extent lies entirely below ``boundary`` on ``axis`` go to
    the train split, entries entirely above it to the test split.

    :type datasets: list
    :param datasets: List of ``(StreetMap, trajectories)``.

    :type boundary: float
    :param boundary: Split coordinate, meters.

    :type axis: str
    :param axis: `x` or `y`.

    :rtype: tuple
    :return: ``(Dataset train, Dataset test)``.
    """

    if axis not in ('x', 'y'):
        raise ValidationError('axis must be x or y, got %r' % axis)

    train, test = [], []
    for street_map, trajs in datasets:
        ext = street_map.extent
        low = ext.origin_x if axis == 'x' else ext.origin_y
        high = ext.x_max if axis == 'x' else ext.y_max
        if high <= boundary:
            train.append((street_map, trajs))
        elif low >= boundary:
            test.append((street_map, trajs))
        else:
            raise ValidationError({
                'message': 'Extent straddles the split boundary',
                'data': '[%s, %s] vs %s' % (low, high, boundary)})

    logger.info("Spatial split at %s=%s: %d train, %d test",
                axis, boundary, len(train), len(test))
    return Dataset(tuple(train), TRAIN), Dataset(tuple(test), TEST)
