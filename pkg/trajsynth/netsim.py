# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Multi-cell network simulation driven by user trajectories.

Each step moves users one trajectory point, refreshes the SINR of every
candidate ``(station, band)``, asks a policy for an association and scores
the resulting equal-share rates.
"""

import csv
import dataclasses
import json
import math
import subprocess
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .channel import DEFAULT_BANDS, Band, ShadowField, hex_layout, pathloss_db
from .errors import ParseError, TrajSynthError, ValidationError
from .logger import get_logger

logger = get_logger(__name__)

KPI_HEADER = ['step', 'p5_rate', 'utility', 'handovers']


@dataclasses.dataclass(frozen=True)
class EpisodeConfig(object):
    """Episode and channel constants.

    :type spacing: float
    :param spacing: Inter-site distance, meters. Default: 500

    :type n_users: int
    :param n_users: Users per episode. Default: 100

    :type horizon_steps: int
    :param horizon_steps: Steps per episode. Default: 64

    :type lam: float
    :param lam: Handover penalty of :func:`reward`. Default: 0

    :type log_base: float
    :param log_base: Base of the utility logarithm. Default: 10
    """

    spacing: float = 500.0
    bands: tuple = DEFAULT_BANDS
    bs_height: float = 25.0
    ut_height: float = 1.5
    sigma_db: float = 6.0
    decorr_m: float = 50.0
    n_sinusoids: int = 100
    noise_density_dbm_hz: float = -174.0
    n_users: int = 100
    horizon_steps: int = 64
    step_seconds: float = 1.0
    lam: float = 0.0
    log_base: float = 10.0

    def __post_init__(self):
        bands = tuple(b if isinstance(b, Band) else Band(**b)
                      for b in self.bands)
        if not bands:
            raise ValidationError('At least one band is required')
        object.__setattr__(self, 'bands', bands)
        if self.n_users < 1 or self.horizon_steps < 1:
            raise ValidationError('n_users and horizon_steps must be >= 1')
        if not self.log_base > 1:
            raise ValidationError('log_base must exceed 1')

    def to_dict(self):
        values = dataclasses.asdict(self)
        values['bands'] = [b.to_dict() for b in self.bands]
        return values

    @classmethod
    def from_file(cls, path):
        """Config from a JSON file; absent keys keep their defaults."""

        try:
            with open(path, 'r') as f:
                values = json.load(f)
        except (OSError, ValueError) as e:
            raise ParseError({'message': 'Unable to read episode config',
                              'data': '%s: %s' % (path, e)})
        try:
            return cls(**values)
        except TypeError as e:
            raise ValidationError({'message': 'Bad episode config',
                                   'data': str(e)})


@dataclasses.dataclass
class NetworkState(object):
    """Mutable state of one episode.

    ``association[u]`` is ``(station index, band index)``; ``-1`` before the
    first policy decision.
    """

    stations: list
    cfg: EpisodeConfig
    positions: np.ndarray
    association: np.ndarray = None
    step: int = 0
    handover_count: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions,
                                    dtype=np.float64).reshape(-1, 2)
        if self.association is None:
            self.association = np.full((len(self.positions), 2), -1,
                                       dtype=np.int64)

    @property
    def n_users(self):
        return len(self.positions)

    def loads(self):
        """Users per ``(station, band)``."""

        counts = np.zeros((len(self.stations), len(self.cfg.bands)),
                          dtype=np.int64)
        assigned = self.association[:, 0] >= 0
        np.add.at(counts, (self.association[assigned, 0],
                           self.association[assigned, 1]), 1)
        return counts


def shadow_field(stations, cfg, seed):
    keys = [(s.id, b) for s in stations for b in range(len(cfg.bands))]
    return ShadowField.build(keys, cfg.sigma_db, cfg.decorr_m,
                             cfg.n_sinusoids, seed)


def rx_power_dbm(state, fields):
    """Received power of every ``(user, station, band)``, ``(U, S, B)``."""

    cfg = state.cfg
    sx = np.array([s.x for s in state.stations])
    sy = np.array([s.y for s in state.stations])
    heights = np.array([s.height for s in state.stations])
    dx = state.positions[:, 0:1] - sx[None, :]
    dy = state.positions[:, 1:2] - sy[None, :]
    d2d = np.maximum(np.hypot(dx, dy), 1.0)

    out = np.empty((state.n_users, len(state.stations), len(cfg.bands)))
    for b, band in enumerate(cfg.bands):
        pl = pathloss_db(band, d2d, heights[None, :], cfg.ut_height)
        for s, station in enumerate(state.stations):
            shadow = fields.shadow_db(station.id, b, state.positions)
            out[:, s, b] = band.tx_power_dbm - pl[:, s] - shadow
    return out


def sinr_matrix(state, fields):
    """Linear SINR of every ``(user, station, band)``.

    Every other station on the same band interferes at full power.
    """

    rx = 10.0 ** (rx_power_dbm(state, fields) / 10.0)
    noise = np.array([10.0 ** (band.noise_dbm(
        state.cfg.noise_density_dbm_hz) / 10.0) for band in state.cfg.bands])
    interference = rx.sum(axis=1, keepdims=True) - rx
    return rx / (interference + noise[None, None, :])


def sinr_db(state, fields, user, station, band):
    """SINR of one link, dB."""

    return float(10.0 * np.log10(sinr_matrix(state, fields)[user, station,
                                                           band]))


@dataclasses.dataclass(frozen=True)
class PolicyRequest(object):
    """What a policy sees each step.

    :type sinr: numpy.ndarray
    :param sinr: Linear SINR, ``(U, S, B)``.

    :type loads: numpy.ndarray
    :param loads: Users per ``(station, band)`` under the previous
        association, ``(S, B)``.
    """

    step: int
    sinr: np.ndarray
    loads: np.ndarray
    bandwidths: np.ndarray


def max_sinr_policy(sinr):
    """Associate each user with its strongest ``(station, band)``.

    Ties go to the lowest station id, then the lowest band index.

    :rtype: numpy.ndarray
    :return: ``(U, 2)`` association.
    """

    users, _, bands = sinr.shape
    flat = np.argmax(sinr.reshape(users, -1), axis=1)
    return np.stack([flat // bands, flat % bands], axis=1).astype(np.int64)


class MaxSinrPolicy(object):
    """Strongest-signal association."""

    name = 'maxsinr'

    def __call__(self, request):
        return max_sinr_policy(request.sinr)

    def close(self):
        pass


class GreedyLoadPolicy(object):
    """Load-aware association.

    Users are placed one at a time in id order on the ``(station, band)``
    that maximizes their own share ``bandwidth / (n + 1) * log2(1 + sinr)``
    given the users already placed.
    """

    name = 'greedy'

    def __call__(self, request):
        users, stations, bands = request.sinr.shape
        counts = np.zeros((stations, bands))
        spectral = request.bandwidths[None, None, :] * np.log2(
            1.0 + request.sinr)
        result = np.empty((users, 2), dtype=np.int64)
        for u in range(users):
            flat = int(np.argmax((spectral[u] / (counts + 1.0)).ravel()))
            s, b = divmod(flat, bands)
            counts[s, b] += 1
            result[u] = (s, b)
        return result

    def close(self):
        pass


class ExternalPolicy(object):
    """Policy running in another process.

    One JSON line per step goes to the child's stdin::

        {"step": 0, "candidates": [[[station, band, sinr_db], ...], ...],
         "loads": [[n, ...], ...]}

    and one line comes back mapping user ids to ``[station, band]``::

        {"0": [3, 1], "1": [4, 0], ...}

    :type command: list
    :param command: Program and arguments.
    """

    name = 'extern'

    def __init__(self, command):
        self.command = list(command)
        self.process = None

    def _start(self):
        if self.process is None:
            logger.debug("Starting external policy: %s", self.command)
            self.process = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                universal_newlines=True, bufsize=1)
        return self.process

    def __call__(self, request):
        process = self._start()
        users, stations, bands = request.sinr.shape
        sinr_db_values = 10.0 * np.log10(request.sinr)
        candidates = [[[s, b, round(float(sinr_db_values[u, s, b]), 4)]
                       for s in range(stations) for b in range(bands)]
                      for u in range(users)]
        message = {'step': int(request.step), 'candidates': candidates,
                   'loads': request.loads.tolist()}
        process.stdin.write(json.dumps(message) + '\n')
        process.stdin.flush()
        line = process.stdout.readline()
        if not line:
            raise TrajSynthError('External policy closed its output')
        try:
            reply = json.loads(line)
            result = np.array([reply[str(u)] for u in range(users)],
                              dtype=np.int64).reshape(users, 2)
        except (ValueError, KeyError, TypeError) as e:
            raise ParseError({'message': 'Bad external policy reply',
                              'data': str(e)})
        return result

    def close(self):
        if self.process is not None:
            self.process.stdin.close()
            self.process.wait()
            self.process = None


POLICIES = {'maxsinr': MaxSinrPolicy, 'greedy': GreedyLoadPolicy}


def user_rates(association, sinr, bandwidths):
    """Equal-share rate of every user, bit/s.

    :type association: numpy.ndarray
    :param association: ``(U, 2)`` station and band indices.

    :type sinr: numpy.ndarray
    :param sinr: Linear SINR, ``(U, S, B)``.

    :type bandwidths: array-like
    :param bandwidths: Hz per band.

    :rtype: numpy.ndarray
    """

    association = np.asarray(association, dtype=np.int64)
    users = len(association)
    s, b = association[:, 0], association[:, 1]
    counts = np.zeros(sinr.shape[1:], dtype=np.int64)
    np.add.at(counts, (s, b), 1)
    own = sinr[np.arange(users), s, b]
    bw = np.asarray(bandwidths, dtype=np.float64)[b]
    return bw / counts[s, b] * np.log2(1.0 + own)


@dataclasses.dataclass(frozen=True)
class Kpi(object):
    p5_rate: float
    utility: float
    handovers: int


def kpis(rates, prev_assoc, new_assoc, log_base=10.0):
    """5th percentile rate, log-mean utility and handover count.

    Rates are floored at 1 bit/s before the logarithm. Without a previous
    association no handover is counted.

    :rtype: :class:`Kpi`
    """

    rates = np.asarray(rates, dtype=np.float64)
    if rates.size == 0:
        raise ValidationError('kpis needs at least one rate')
    p5 = float(np.percentile(rates, 5))
    utility = float(np.mean(np.log(np.maximum(rates, 1.0))) /
                    math.log(log_base))
    if prev_assoc is None or np.any(np.asarray(prev_assoc) < 0):
        handovers = 0
    else:
        changed = np.any(np.asarray(prev_assoc) != np.asarray(new_assoc),
                         axis=1)
        handovers = int(np.count_nonzero(changed))
    return Kpi(p5, utility, handovers)


def reward(kpi, lam):
    """Utility minus ``lam`` per handover."""

    return kpi.utility - lam * kpi.handovers


def _check_association(assoc, users, stations, bands):
    assoc = np.asarray(assoc, dtype=np.int64)
    if (assoc.shape != (users, 2) or np.any(assoc < 0) or
            np.any(assoc[:, 0] >= stations) or np.any(assoc[:, 1] >= bands)):
        raise ValidationError('Policy returned an invalid association')
    return assoc


def run_episode(trajectories, policy, cfg, seed, extent):
    """Simulate one episode.

    :type trajectories: list
    :param trajectories: At least ``cfg.n_users`` trajectories, each with at
        least ``cfg.horizon_steps`` points; the first ``n_users`` are used.

    :type policy: callable
    :param policy: Maps a :class:`PolicyRequest` to a ``(U, 2)``
        association.

    :type cfg: :class:`EpisodeConfig`
    :param cfg: Episode constants.

    :type seed: int
    :param seed: Seed of the shadow fields.

    :type extent: :class:`trajsynth.geodata.Extent`
    :param extent: Area covered by the cell layout.

    :rtype: tuple
    :return: ``(records, summary)``: per-step dicts and episode aggregates.
    """

    if len(trajectories) < cfg.n_users:
        raise ValidationError({'message': 'Not enough trajectories',
                               'data': '%d < %d' % (len(trajectories),
                                                    cfg.n_users)})
    users = list(trajectories[:cfg.n_users])
    for index, traj in enumerate(users):
        if len(traj) < cfg.horizon_steps:
            raise ValidationError({
                'message': 'Trajectory shorter than the horizon',
                'data': 'user %d: %d < %d' % (index, len(traj),
                                              cfg.horizon_steps)})

    stations = hex_layout(extent, cfg.spacing, cfg.bs_height)
    fields = shadow_field(stations, cfg, seed)
    bandwidths = np.array([b.bandwidth_hz for b in cfg.bands])
    state = NetworkState(stations, cfg,
                         np.array([t.points[0] for t in users]))

    records, all_rates = [], []
    for step in range(cfg.horizon_steps):
        state.step = step
        state.positions = np.array([t.points[step] for t in users])
        sinr = sinr_matrix(state, fields)
        request = PolicyRequest(step, sinr, state.loads(), bandwidths)
        assoc = _check_association(policy(request), len(users),
                                   len(stations), len(cfg.bands))
        rates = user_rates(assoc, sinr, bandwidths)
        kpi = kpis(rates, state.association, assoc, cfg.log_base)
        state.association = assoc
        state.handover_count += kpi.handovers
        all_rates.append(rates)
        records.append({'step': step, 'p5_rate': kpi.p5_rate,
                        'utility': kpi.utility, 'handovers': kpi.handovers,
                        'reward': reward(kpi, cfg.lam)})
        logger.debug("step %d: %s", step, kpi)

    summary = {
        'steps': cfg.horizon_steps,
        'users': len(users),
        'stations': len(stations),
        'p5_rate_step_mean': float(np.mean([r['p5_rate'] for r in records])),
        'p5_rate_episode': float(np.percentile(np.concatenate(all_rates), 5)),
        'utility_mean': float(np.mean([r['utility'] for r in records])),
        'handovers': int(state.handover_count),
        'reward_sum': float(np.sum([r['reward'] for r in records])),
        'seed': int(seed),
    }
    logger.info("Episode done: %s", summary)
    return records, summary


def run_episodes(trajectory_sets, policy_factory, cfg, seeds, extent,
                 threads=1):
    """Independent episodes in parallel, one fresh policy each.

    :rtype: list
    :return: ``(records, summary)`` per episode, in input order.
    """

    def one(job):
        trajs, seed = job
        policy = policy_factory()
        try:
            return run_episode(trajs, policy, cfg, seed, extent)
        finally:
            policy.close()

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        return list(pool.map(one, zip(trajectory_sets, seeds)))


def compare_sources(sources, policy_factory, cfg, seed, extent):
    """Episode summary per trajectory source under one policy.

    :type sources: dict
    :param sources: Source name to trajectory list.

    :rtype: dict
    """

    result = {}
    for name in sorted(sources):
        policy = policy_factory()
        try:
            _, result[name] = run_episode(sources[name], policy, cfg, seed,
                                          extent)
        finally:
            policy.close()
    return result


def write_kpi_csv(records, path):
    """Write the `step,p5_rate,utility,handovers` series."""

    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(KPI_HEADER)
        for r in records:
            writer.writerow([r['step'], repr(r['p5_rate']),
                             repr(r['utility']), r['handovers']])
