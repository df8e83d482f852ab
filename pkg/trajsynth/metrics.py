# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Trajectory and distribution similarity.

Per-pair metrics are edit distance on real sequences (EDR, an operation
count) and dynamic time warping (DTW, accumulated squared meters). Set-level
metrics compare occupancy heatmaps by cosine similarity and by sliced
2-Wasserstein distance in meters.
"""

import dataclasses
import json

import numba as nb
import numpy as np
import ot

from .errors import ValidationError
from .logger import get_logger
from .raster import rasterize_trajectory

logger = get_logger(__name__)

JIT = dict(nopython=True, cache=False, nogil=True)
JIT_PARALLEL = dict(nopython=True, cache=False, parallel=True)

DEFAULT_TAU = 20.0
DEFAULT_N_PROJ = 500


@nb.jit(**JIT)
def _edr_kernel(a, b, tau):
    n, m = a.shape[0], b.shape[0]
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i in range(n + 1):
        cost[i, 0] = i
    for j in range(m + 1):
        cost[0, j] = j
    tau2 = tau * tau
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dx = a[i - 1, 0] - b[j - 1, 0]
            dy = a[i - 1, 1] - b[j - 1, 1]
            sub = 0 if dx * dx + dy * dy < tau2 else 1
            best = cost[i - 1, j - 1] + sub
            if cost[i - 1, j] + 1 < best:
                best = cost[i - 1, j] + 1
            if cost[i, j - 1] + 1 < best:
                best = cost[i, j - 1] + 1
            cost[i, j] = best
    return cost[n, m]


@nb.jit(**JIT)
def _dtw_kernel(a, b):
    n, m = a.shape[0], b.shape[0]
    cost = np.full((n + 1, m + 1), np.inf)
    cost[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dx = a[i - 1, 0] - b[j - 1, 0]
            dy = a[i - 1, 1] - b[j - 1, 1]
            best = cost[i - 1, j - 1]
            if cost[i - 1, j] < best:
                best = cost[i - 1, j]
            if cost[i, j - 1] < best:
                best = cost[i, j - 1]
            cost[i, j] = dx * dx + dy * dy + best
    return cost[n, m]


@nb.jit(**JIT_PARALLEL)
def _min_pair_kernel(gen, gen_off, ref, ref_off, tau):
    n_gen = gen_off.shape[0] - 1
    n_ref = ref_off.shape[0] - 1
    edr_min = np.empty(n_gen)
    dtw_min = np.empty(n_gen)
    for g in nb.prange(n_gen):
        a = gen[gen_off[g]:gen_off[g + 1]]
        best_edr = np.inf
        best_dtw = np.inf
        for r in range(n_ref):
            b = ref[ref_off[r]:ref_off[r + 1]]
            e = _edr_kernel(a, b, tau)
            if e < best_edr:
                best_edr = e
            d = _dtw_kernel(a, b)
            if d < best_dtw:
                best_dtw = d
        edr_min[g] = best_edr
        dtw_min[g] = best_dtw
    return edr_min, dtw_min


def _points(traj):
    if traj is None:
        return np.zeros((0, 2))
    pts = getattr(traj, 'points', traj)
    return np.ascontiguousarray(np.asarray(pts, dtype=np.float64)
                                .reshape(-1, 2))


def edr(a, b, tau=DEFAULT_TAU):
    """Edit distance on real sequences.

    Points match when closer than ``tau``; substitution, insertion and
    deletion each cost 1. Either trajectory may be empty.

    :type a: :class:`trajsynth.geodata.Trajectory`
    :param a: Trajectory, or an ``(n, 2)`` array.

    :type tau: float
    :param tau: Match threshold, meters. Default: 20

    :rtype: int
    """

    if not tau > 0:
        raise ValidationError('tau must be positive')
    return int(_edr_kernel(_points(a), _points(b), float(tau)))


def dtw(a, b):
    """Dynamic time warping with squared Euclidean point cost.

    :rtype: float
    :return: Accumulated cost, square meters.
    """

    pa, pb = _points(a), _points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ValidationError('dtw needs two nonempty trajectories')
    return float(_dtw_kernel(pa, pb))


@dataclasses.dataclass(frozen=True, eq=False)
class Heatmap(object):
    """Occupancy probability per cell; all zero for empty input."""

    data: np.ndarray
    extent: object

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if np.any(data < 0):
            raise ValidationError('Heatmap values must be nonnegative')
        total = data.sum()
        if total != 0 and abs(total - 1.0) > 1e-9:
            raise ValidationError('Heatmap mass must be 0 or 1, got %r' %
                                  total)
        object.__setattr__(self, 'data', data)

    def is_empty(self):
        return not np.any(self.data)

    def point_cloud(self):
        """Cell centers and weights of the nonzero cells."""

        rows, cols = np.nonzero(self.data)
        ext = self.extent
        x = ext.origin_x + (cols + 0.5) * ext.cell_size
        y = ext.origin_y + (rows + 0.5) * ext.cell_size
        return np.stack([x, y], axis=1), self.data[rows, cols]


def heatmap_from(trajs, extent):
    """Normalized sum of the binary trajectory rasters.

    :rtype: :class:`Heatmap`
    """

    total = np.zeros((extent.n, extent.n))
    for traj in trajs:
        total += rasterize_trajectory(traj, extent).data[0]
    mass = total.sum()
    if mass > 0:
        total /= mass
    return Heatmap(total, extent)


def save_heatmap(heatmap, path):
    """Write the heatmap array as `.npy`."""

    np.save(path, heatmap.data)


def _require_nonzero(*maps):
    for heatmap in maps:
        if heatmap.is_empty():
            raise ValidationError('Heatmap is all zero')


def cosine_sim(p, q):
    """Cosine similarity of two flattened heatmaps."""

    _require_nonzero(p, q)
    u, v = p.data.ravel(), q.data.ravel()
    value = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return min(1.0, max(0.0, value))


def projection_directions(n_proj, seed):
    """``(2, n_proj)`` unit vectors at angles uniform in [0, pi)."""

    theta = np.random.default_rng(seed).uniform(0.0, np.pi, size=n_proj)
    return np.stack([np.cos(theta), np.sin(theta)])


def sliced_wasserstein(p, q, n_proj=DEFAULT_N_PROJ, seed=0):
    """Sliced 2-Wasserstein distance between heatmaps, in meters.

    Each heatmap is a weighted cloud of cell centers. The 1D distances over
    ``n_proj`` random directions are combined by root mean square.

    :type n_proj: int
    :param n_proj: Number of projections. Default: 500

    :type seed: int
    :param seed: Seed of the projection angles.

    :rtype: float
    """

    _require_nonzero(p, q)
    if n_proj < 1:
        raise ValidationError('n_proj must be at least 1')
    xs, a = p.point_cloud()
    xt, b = q.point_cloud()
    value = ot.sliced_wasserstein_distance(
        xs, xt, a / a.sum(), b / b.sum(), n_projections=int(n_proj), p=2,
        projections=projection_directions(int(n_proj), seed))
    return float(value)


@dataclasses.dataclass(frozen=True)
class SimilarityReport(object):
    """Scores of a generated set against a reference set."""

    edr_mean: float
    dtw_mean: float
    cosine: float
    sliced_wasserstein: float
    n_generated: int
    n_reference: int
    tau: float = DEFAULT_TAU
    n_proj: int = DEFAULT_N_PROJ
    seed: int = 0

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _flatten(trajs):
    arrays = [_points(t) for t in trajs]
    offsets = np.zeros(len(arrays) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(a) for a in arrays])
    return np.ascontiguousarray(np.concatenate(arrays)), offsets


def min_pair_scores(generated, reference, tau=DEFAULT_TAU):
    """Per generated trajectory, the minimum EDR and DTW over the
    reference set.

    :rtype: tuple
    :return: ``(edr_min, dtw_min)`` arrays.
    """

    gen, gen_off = _flatten(generated)
    ref, ref_off = _flatten(reference)
    return _min_pair_kernel(gen, gen_off, ref, ref_off, float(tau))


def evaluate_sets(generated, reference, extent, tau=DEFAULT_TAU,
                  n_proj=DEFAULT_N_PROJ, seed=0, threads=None):
    """Score a generated set against a reference set.

    :type generated: list
    :param generated: Generated :class:`trajsynth.geodata.Trajectory`.

    :type reference: list
    :param reference: Reference trajectories.

    :type extent: :class:`trajsynth.geodata.Extent`
    :param extent: Heatmap geometry.

    :type threads: int
    :param threads: Worker threads for the pair matrix. Default: numba's.

    :rtype: :class:`SimilarityReport`
    """

    if not generated or not reference:
        raise ValidationError('evaluate_sets needs two nonempty sets')
    if not tau > 0:
        raise ValidationError('tau must be positive')
    if threads:
        nb.set_num_threads(min(int(threads), nb.config.NUMBA_NUM_THREADS))

    edr_min, dtw_min = min_pair_scores(generated, reference, tau)
    p = heatmap_from(generated, extent)
    q = heatmap_from(reference, extent)
    report = SimilarityReport(
        edr_mean=float(np.mean(edr_min)),
        dtw_mean=float(np.mean(dtw_min)),
        cosine=cosine_sim(p, q),
        sliced_wasserstein=sliced_wasserstein(p, q, n_proj, seed),
        n_generated=len(generated),
        n_reference=len(reference),
        tau=float(tau), n_proj=int(n_proj), seed=int(seed))
    logger.info("Similarity: %s", report)
    return report
