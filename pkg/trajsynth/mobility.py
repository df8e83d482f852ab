# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Baseline mobility models.

Random waypoint (RWP), Gauss-Markov (GM) and their street-restricted
variants M-RWP and M-GM, which move over the cells of a street mask.
"""

import collections
import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import ndimage

from .errors import GenerationError, UnreachableError, ValidationError
from .geodata import Trajectory, child_seed, resample
from .logger import get_logger
from .raster import largest_component, rasterize_map, street_mask

logger = get_logger(__name__)

RWP = 'rwp'
GM = 'gm'
M_RWP = 'mrwp'
M_GM = 'mgm'
DIFFUSION = 'diffusion'
MODELS = (RWP, GM, M_RWP, M_GM)

# Neighbor order for BFS ties: north, east, south, west. Row 0 is south.
NEIGHBORS_4 = ((1, 0), (0, 1), (-1, 0), (0, -1))
NEIGHBORS_8 = ((1, 0), (1, 1), (0, 1), (-1, 1),
               (-1, 0), (-1, -1), (0, -1), (1, -1))
FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
CENTER = np.array([[0, 0, 0], [0, 1, 0], [0, 0, 0]])


@dataclasses.dataclass(frozen=True)
class MobilityConfig(object):
    """Parameters of the baseline models.

    :type model: str
    :param model: One of `rwp`, `gm`, `mrwp`, `mgm` or `diffusion`.

    :type speed_min: float
    :param speed_min: RWP leg speed lower bound, m/s. Default: 0.5

    :type speed_max: float
    :param speed_max: RWP leg speed upper bound, m/s. Default: 2.0

    :type gm_alpha: float
    :param gm_alpha: Gauss-Markov memory level in [0, 1]. Default: 0.75

    :type gm_mean_speed: float
    :param gm_mean_speed: Stationary mean speed, m/s. Default: 1.0

    :type gm_sigma: float
    :param gm_sigma: Stationary speed deviation, m/s. Default: 0.3

    :type gm_heading_sigma: float
    :param gm_heading_sigma: Stationary heading deviation, rad. Default: 0.4

    :type step_seconds: float
    :param step_seconds: Time between emitted points. Default: 1.0

    :type horizon_steps: int
    :param horizon_steps: Points per trajectory. Default: 64
    """

    model: str = RWP
    speed_min: float = 0.5
    speed_max: float = 2.0
    gm_alpha: float = 0.75
    gm_mean_speed: float = 1.0
    gm_sigma: float = 0.3
    gm_heading_sigma: float = 0.4
    step_seconds: float = 1.0
    horizon_steps: int = 64

    def __post_init__(self):
        if self.model not in MODELS + (DIFFUSION,):
            raise ValidationError('Unknown mobility model: %s' % self.model)
        if not 0 <= self.speed_min <= self.speed_max:
            raise ValidationError({
                'message': 'Speeds must satisfy 0 <= speed_min <= speed_max',
                'data': '%s, %s' % (self.speed_min, self.speed_max)})
        if not 0 <= self.gm_alpha <= 1:
            raise ValidationError('gm_alpha must lie in [0, 1]')
        if self.gm_sigma < 0 or self.gm_heading_sigma < 0:
            raise ValidationError('Gauss-Markov deviations must be >= 0')
        if not self.step_seconds > 0:
            raise ValidationError('step_seconds must be positive')
        if int(self.horizon_steps) < 1:
            raise ValidationError('horizon_steps must be at least 1')

    def with_model(self, model):
        return dataclasses.replace(self, model=model)


@dataclasses.dataclass(frozen=True)
class GridPath(object):
    """Street cells visited by a shortest path, start and goal included."""

    cells: tuple

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)


def _require(cfg, model):
    if cfg.model != model:
        raise ValidationError('Config is for model %s, not %s' % (cfg.model,
                                                                  model))


def _mask_array(mask):
    data = mask.data[0] if mask.data.ndim == 3 else mask.data
    return data > 0


def gen_rwp(cfg, extent, seed):
    """Random waypoint trajectory.

    The first point is uniform over the extent. Each leg heads in a straight
    line to a uniform waypoint at a speed drawn uniformly from
    ``[speed_min, speed_max]``; a step that would overshoot stops at the
    waypoint.

    :type cfg: :class:`MobilityConfig`
    :param cfg: Config with ``model == 'rwp'``.

    :type extent: :class:`trajsynth.geodata.Extent`
    :param extent: Movement area.

    :type seed: int
    :param seed: Random seed.

    :rtype: :class:`trajsynth.geodata.Trajectory`
    """

    _require(cfg, RWP)
    rng = np.random.default_rng(seed)
    low = np.array([extent.origin_x, extent.origin_y])

    def waypoint():
        return low + rng.uniform(0, extent.side, size=2)

    pos = waypoint()
    target = waypoint()
    speed = rng.uniform(cfg.speed_min, cfg.speed_max)
    points = [pos.copy()]
    for _ in range(int(cfg.horizon_steps) - 1):
        delta = target - pos
        remaining = float(np.hypot(delta[0], delta[1]))
        step = speed * cfg.step_seconds
        if step >= remaining:
            pos = target
            target = waypoint()
            speed = rng.uniform(cfg.speed_min, cfg.speed_max)
        else:
            pos = pos + delta * (step / remaining)
        points.append(pos.copy())
    return Trajectory(points, cfg.step_seconds)


def gm_process(cfg, rng, steps, speed0=None, heading0=None):
    """Speeds and headings of the Gauss-Markov recurrence.

    Both follow ``s_t = a*s_{t-1} + (1-a)*mu + sigma*sqrt(1-a^2)*w_t`` with
    ``a = gm_alpha``. The mean heading is the initial heading. Unless given,
    the initial speed is drawn from the stationary law and the initial
    heading uniformly.

    :rtype: tuple
    :return: ``(speeds, headings)`` arrays of length ``steps``.
    """

    a = cfg.gm_alpha
    scale = math.sqrt(max(0.0, 1.0 - a * a))
    if speed0 is None:
        speed0 = cfg.gm_mean_speed + cfg.gm_sigma * rng.standard_normal()
    if heading0 is None:
        heading0 = rng.uniform(0.0, 2.0 * math.pi)
    speeds = np.empty(steps)
    headings = np.empty(steps)
    if steps == 0:
        return speeds, headings
    speeds[0], headings[0] = speed0, heading0
    noise = rng.standard_normal((max(steps - 1, 0), 2))
    for t in range(1, steps):
        speeds[t] = (a * speeds[t - 1] + (1 - a) * cfg.gm_mean_speed +
                     cfg.gm_sigma * scale * noise[t - 1, 0])
        headings[t] = (a * headings[t - 1] + (1 - a) * heading0 +
                       cfg.gm_heading_sigma * scale * noise[t - 1, 1])
    return speeds, headings


def fold_into(values, low, side):
    """Reflect unconstrained coordinates into ``[low, low + side]``."""

    period = 2.0 * side
    shifted = np.mod(np.asarray(values) - low, period)
    return low + side - np.abs(shifted - side)


def gen_gm(cfg, extent, seed):
    """Gauss-Markov trajectory, reflected at the extent boundary.

    The position integrates ``speed * step_seconds`` along the heading;
    leaving the square mirrors the path back in, which is the same as
    bouncing with a mirrored heading.

    :rtype: :class:`trajsynth.geodata.Trajectory`
    """

    _require(cfg, GM)
    rng = np.random.default_rng(seed)
    start = rng.uniform(0, extent.side, size=2)
    steps = int(cfg.horizon_steps)
    speeds, headings = gm_process(cfg, rng, steps)
    dx = speeds[:-1] * np.cos(headings[:-1]) * cfg.step_seconds
    dy = speeds[:-1] * np.sin(headings[:-1]) * cfg.step_seconds
    x = start[0] + np.concatenate([[0.0], np.cumsum(dx)])
    y = start[1] + np.concatenate([[0.0], np.cumsum(dy)])
    points = np.stack([fold_into(x, extent.origin_x, extent.side),
                       fold_into(y, extent.origin_y, extent.side)], axis=1)
    return Trajectory(points, cfg.step_seconds)


def bfs_path(mask, start, goal):
    """Shortest 4-connected path through street cells.

    Neighbors are expanded north, east, south, west, so ties always resolve
    the same way.

    :type mask: :class:`trajsynth.raster.RasterGrid`
    :param mask: 1-channel street mask.

    :type start: tuple
    :param start: ``(row, col)`` street cell.

    :type goal: tuple
    :param goal: ``(row, col)`` street cell.

    :rtype: :class:`GridPath`
    """

    street = _mask_array(mask)
    start, goal = tuple(int(v) for v in start), tuple(int(v) for v in goal)
    n = street.shape[0]
    for name, cell in (('start', start), ('goal', goal)):
        if not (0 <= cell[0] < n and 0 <= cell[1] < n) or not street[cell]:
            raise ValidationError('BFS %s %s is not a street cell' % (name,
                                                                      cell))

    queue = collections.deque([start])
    parent = {start: None}
    while queue:
        current = queue.popleft()
        if current == goal:
            path = []
            node = goal
            while node is not None:
                path.append(node)
                node = parent[node]
            path.reverse()
            return GridPath(tuple(path))
        for dr, dc in NEIGHBORS_4:
            nxt = (current[0] + dr, current[1] + dc)
            if (0 <= nxt[0] < n and 0 <= nxt[1] < n and street[nxt] and
                    nxt not in parent):
                parent[nxt] = current
                queue.append(nxt)

    raise UnreachableError({'message': 'Goal unreachable from start',
                            'data': '%s -> %s' % (start, goal)})


def _component_cells(mask, structure):
    street = _mask_array(mask)
    if not street.any():
        raise ValidationError('Street mask is empty')
    return np.argwhere(largest_component(street, structure))


def gen_m_rwp(cfg, mask, seed):
    """Random waypoint restricted to streets.

    Start and waypoints are uniform over the cells of the largest
    4-connected street component. Each leg walks the BFS path at the leg
    speed and emits the center of the cell reached so far; distance left
    over at a waypoint carries into the next leg.

    :type mask: :class:`trajsynth.raster.RasterGrid`
    :param mask: 1-channel street mask.

    :rtype: :class:`trajsynth.geodata.Trajectory`
    """

    _require(cfg, M_RWP)
    extent = mask.extent
    cells = _component_cells(mask, FOUR_CONNECTED)
    rng = np.random.default_rng(seed)
    steps = int(cfg.horizon_steps)

    current = tuple(cells[rng.integers(len(cells))])
    if len(cells) == 1:
        return Trajectory([extent.cell_center(*current)] * steps,
                          cfg.step_seconds)

    def new_leg(origin):
        while True:
            goal = tuple(cells[rng.integers(len(cells))])
            if goal != origin:
                break
        return (bfs_path(mask, origin, goal).cells,
                rng.uniform(cfg.speed_min, cfg.speed_max))

    path, speed = new_leg(current)
    progress = 0.0
    points = [extent.cell_center(*current)]
    for _ in range(steps - 1):
        progress += speed * cfg.step_seconds
        length = (len(path) - 1) * extent.cell_size
        while progress >= length:
            progress -= length
            leftover = progress / speed if speed > 0 else 0.0
            path, speed = new_leg(path[-1])
            progress = leftover * speed
            length = (len(path) - 1) * extent.cell_size
        current = path[int(progress // extent.cell_size)]
        points.append(extent.cell_center(*current))
    return Trajectory(points, cfg.step_seconds)


def _angle_between(a, b):
    return abs((a - b + math.pi) % (2.0 * math.pi) - math.pi)


def _direction(dr, dc):
    return math.atan2(dr, dc)


def gen_m_gm(cfg, mask, seed):
    """Gauss-Markov motion restricted to streets.

    Speed and heading follow the Gauss-Markov recurrence; the mean heading
    is the direction of the last move. The walker travels cell to cell
    over 8-neighbors, a diagonal move costing ``sqrt(2)`` cells of distance
    and never passing beside a junction. The proposed move is the neighbor
    the heading points to; if that cell is off-street, or is the cell just
    left, the walker takes the street neighbor whose direction deviates
    least from the heading instead, turning back only at a dead end. With
    no street neighbor at all the heading is redrawn uniformly. Every
    emitted point is the center of the current cell.

    :type mask: :class:`trajsynth.raster.RasterGrid`
    :param mask: 1-channel street mask.

    :rtype: :class:`trajsynth.geodata.Trajectory`
    """

    _require(cfg, M_GM)
    extent = mask.extent
    street = _mask_array(mask)
    cells = _component_cells(mask, np.ones((3, 3), dtype=int))
    rng = np.random.default_rng(seed)
    n = street.shape[0]
    a = cfg.gm_alpha
    scale = math.sqrt(max(0.0, 1.0 - a * a))
    junction = street & (ndimage.convolve(
        street.astype(int), FOUR_CONNECTED - CENTER, mode='constant') >= 3)

    cell = tuple(int(v) for v in cells[rng.integers(len(cells))])
    previous = None
    speed = cfg.gm_mean_speed + cfg.gm_sigma * rng.standard_normal()
    heading = rng.uniform(0.0, 2.0 * math.pi)
    mean_heading = heading
    travel = 0.0

    def next_move():
        options = []
        for dr, dc in NEIGHBORS_8:
            r, c = cell[0] + dr, cell[1] + dc
            if not (0 <= r < n and 0 <= c < n and street[r, c]):
                continue
            if dr and dc and (junction[r, cell[1]] or junction[cell[0], c]):
                continue
            options.append((dr, dc))
        if not options:
            return None
        forward = [o for o in options
                   if (cell[0] + o[0], cell[1] + o[1]) != previous]
        return min(forward or options,
                   key=lambda o: _angle_between(_direction(*o), heading))

    points = [extent.cell_center(*cell)]
    for _ in range(int(cfg.horizon_steps) - 1):
        travel += max(speed, 0.0) * cfg.step_seconds
        while True:
            move = next_move()
            if move is None:
                heading = mean_heading = rng.uniform(0.0, 2.0 * math.pi)
                travel = 0.0
                break
            cost = extent.cell_size * math.hypot(*move)
            if travel < cost:
                break
            travel -= cost
            previous = cell
            cell = (cell[0] + move[0], cell[1] + move[1])
            # Mean heading stays within pi of the heading.
            turn = _direction(*move) - heading
            mean_heading = (heading - math.pi +
                            (turn + math.pi) % (2.0 * math.pi))
        points.append(extent.cell_center(*cell))

        w = rng.standard_normal(2)
        speed = (a * speed + (1 - a) * cfg.gm_mean_speed +
                 cfg.gm_sigma * scale * w[0])
        heading = (a * heading + (1 - a) * mean_heading +
                   cfg.gm_heading_sigma * scale * w[1])
    return Trajectory(points, cfg.step_seconds)


def generate_one(cfg, seed, extent=None, mask=None):
    """Single trajectory of a baseline model."""

    if cfg.model == RWP:
        return gen_rwp(cfg, extent or mask.extent, seed)
    if cfg.model == GM:
        return gen_gm(cfg, extent or mask.extent, seed)
    if cfg.model == M_RWP:
        return gen_m_rwp(cfg, mask, seed)
    if cfg.model == M_GM:
        return gen_m_gm(cfg, mask, seed)
    raise ValidationError('No single-trajectory generator for %s' % cfg.model)


def generate_batch(cfg, street_map, count, seed, threads=1, model=None,
                   threshold=0.5):
    """``count`` trajectories of any mobility source on one map.

    Trajectory ``i`` uses a seed derived from ``(seed, i)``, so the batch
    does not depend on ``threads``. The `diffusion` source samples images
    conditioned on the map with ``model`` (a ``(params, schedule)`` pair),
    recovers a path from each and resamples it to ``horizon_steps`` points.

    :type cfg: :class:`MobilityConfig`
    :param cfg: Model selection and parameters.

    :type street_map: :class:`trajsynth.geodata.StreetMap`
    :param street_map: Map to move on.

    :rtype: list
    :return: List of :class:`trajsynth.geodata.Trajectory`.
    """

    if count < 1:
        raise ValidationError('count must be at least 1, got %s' % count)
    map_raster = rasterize_map(street_map)

    if cfg.model == DIFFUSION:
        if model is None:
            raise ValidationError('The diffusion source needs a model')
        return _generate_diffusion(cfg, map_raster, count, seed, model,
                                   threshold, threads)

    mask = street_mask(map_raster)
    extent = street_map.extent

    def one(index):
        traj = generate_one(cfg, child_seed(seed, index), extent, mask)
        return Trajectory(traj.points, traj.point_interval,
                          traj_id='%s%d' % (cfg.model, index))

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        result = list(pool.map(one, range(count)))
    logger.info("Generated %d %s trajectories", len(result), cfg.model)
    return result


def _generate_diffusion(cfg, map_raster, count, seed, model, threshold,
                        threads):
    from .diffusion import generate
    from .raster import image_to_trajectory

    params, schedule = model
    images = generate(params, schedule, map_raster, count, seed,
                      threads=threads)
    result = []
    for index, img in enumerate(images):
        level = threshold
        if img.data.max() < level:
            # Nothing reaches the threshold: keep the brightest cells.
            level = float(img.data.max())
            if level <= 0 or img.data.min() >= level:
                raise GenerationError({
                    'message': 'Sample has no cell above its background',
                    'data': 'sample=%d, max=%s' % (index, level)})
            logger.warning("Sample %d below threshold %s, using %s",
                           index, threshold, level)
        traj = image_to_trajectory(img, level, map_raster.extent,
                                   cfg.step_seconds)
        traj = resample(traj, int(cfg.horizon_steps))
        result.append(Trajectory(traj.points, cfg.step_seconds,
                                 traj_id='diffusion%d' % index))
    return result
