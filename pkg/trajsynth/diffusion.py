# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Conditional denoising diffusion over trajectory rasters.

Step convention: ``q(l_t | l_{t-1})`` has coefficient ``alpha_t`` and
``gamma_t = alpha_1 * ... * alpha_t``, with ``gamma_0 = 1``. Trajectory
rasters live in [-1, 1] inside the model and in [0, 1] outside.

The closed-form helpers take numpy arrays, tensors or plain floats.
"""

import copy
import csv
import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import torch

from .denoiser import as_tensor, check_finite, denoiser_apply
from .errors import NumericError, ValidationError
from .geodata import child_seed
from .logger import get_logger
from .raster import (RasterGrid, dihedral_transform, rasterize_map,
                     rasterize_trajectory)

logger = get_logger(__name__)

# sqrt(gamma_T) above this leaves visible structure in l_T.
TERMINAL_SIGNAL = 0.05


@dataclasses.dataclass(frozen=True, eq=False)
class NoiseSchedule(object):
    """Per-step ``alpha`` and cumulative ``gamma``, both indexed 1..T.

    :type alpha: numpy.ndarray
    :param alpha: ``T`` values in (0, 1).
    """

    alpha: np.ndarray
    gamma: np.ndarray = None

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64).ravel()
        if len(alpha) < 1:
            raise ValidationError('A schedule needs at least one step')
        if not np.all((alpha > 0) & (alpha < 1)):
            raise ValidationError('alpha values must lie in (0, 1)')
        gamma = np.cumprod(alpha)
        alpha.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, 'alpha', alpha)
        object.__setattr__(self, 'gamma', gamma)
        if math.sqrt(gamma[-1]) >= TERMINAL_SIGNAL:
            logger.warning("sqrt(gamma_T) = %.4f: l_T is not close to pure "
                           "noise", math.sqrt(gamma[-1]))

    @classmethod
    def from_alpha(cls, alpha):
        return cls(np.asarray(alpha, dtype=np.float64))

    @property
    def T(self):
        return len(self.alpha)

    def check_step(self, t, low=1):
        if not low <= int(t) <= self.T:
            raise ValidationError({'message': 'Diffusion step out of range',
                                   'data': 't=%s, T=%d' % (t, self.T)})

    def alpha_at(self, t):
        return float(self.alpha[int(t) - 1])

    def gamma_at(self, t):
        """``gamma_t``; ``gamma_0`` is 1."""
        return 1.0 if int(t) == 0 else float(self.gamma[int(t) - 1])

    def to_dict(self):
        return {'T': self.T, 'alpha': self.alpha.tolist()}

    def __eq__(self, other):
        return (isinstance(other, NoiseSchedule) and
                np.array_equal(self.alpha, other.alpha))

    __hash__ = None


def make_schedule(T, beta_start=1e-4, beta_end=0.02):
    """Linear-beta schedule, ``alpha_t = 1 - beta_t``.

    :type T: int
    :param T: Number of steps, at least 2.

    :rtype: :class:`NoiseSchedule`
    """

    if int(T) != T or T < 2:
        raise ValidationError('T must be an integer >= 2, got %s' % T)
    if not 0 < beta_start <= beta_end < 1:
        raise ValidationError({
            'message': 'Need 0 < beta_start <= beta_end < 1',
            'data': 'beta_start=%s, beta_end=%s' % (beta_start, beta_end)})
    beta = np.linspace(beta_start, beta_end, int(T), dtype=np.float64)
    return NoiseSchedule(1.0 - beta)


def forward_step(l_t, alpha_t, noise):
    """One forward step: ``sqrt(a)*l_t + sqrt(1-a)*noise``."""

    return math.sqrt(alpha_t) * l_t + math.sqrt(1.0 - alpha_t) * noise


def forward_marginal(l_0, schedule, t, eps):
    """Sample of ``l_t`` given ``l_0``: ``sqrt(g)*l_0 + sqrt(1-g)*eps``."""

    schedule.check_step(t)
    g = schedule.gamma_at(t)
    return math.sqrt(g) * l_0 + math.sqrt(1.0 - g) * eps


def posterior_params(l_0, l_t, schedule, t):
    """Mean and variance of ``q(l_{t-1} | l_t, l_0)``.

    At ``t = 1`` the posterior collapses onto ``l_0``.

    :rtype: tuple
    :return: ``(mu, sigma2)``.
    """

    schedule.check_step(t)
    a = schedule.alpha_at(t)
    g = schedule.gamma_at(t)
    g_prev = schedule.gamma_at(int(t) - 1)
    mu = (math.sqrt(g_prev) * (1.0 - a) / (1.0 - g) * l_0 +
          math.sqrt(a) * (1.0 - g_prev) / (1.0 - g) * l_t)
    sigma2 = (1.0 - g_prev) * (1.0 - a) / (1.0 - g)
    return mu, sigma2


def estimate_x0(l_t, eps_hat, schedule, t):
    """Clean raster implied by a noise estimate."""

    schedule.check_step(t)
    g = schedule.gamma_at(t)
    return (l_t - math.sqrt(1.0 - g) * eps_hat) / math.sqrt(g)


def reverse_mean(l_t, eps_hat, schedule, t):
    """Deterministic part of a sampling step."""

    schedule.check_step(t)
    a = schedule.alpha_at(t)
    g = schedule.gamma_at(t)
    return (l_t - (1.0 - a) / math.sqrt(1.0 - g) * eps_hat) / math.sqrt(a)


def sample_step(params, map_raster, l_t, schedule, t, noise=None):
    """``l_{t-1}`` from ``l_t``: reverse mean plus ``sqrt(1-alpha_t)*noise``.

    The final step ``t = 1`` adds no noise; a nonzero ``noise`` there is
    rejected.

    :rtype: torch.Tensor
    """

    schedule.check_step(t)
    dtype = params.in_conv.weight.dtype
    l_t = as_tensor(l_t, dtype)
    if noise is None:
        noise = torch.zeros_like(l_t)
    noise = as_tensor(noise, dtype)
    if int(t) == 1 and bool(torch.any(noise != 0)):
        raise ValidationError('The final sampling step takes no noise')
    with torch.no_grad():
        eps_hat = denoiser_apply(params, map_raster, l_t, t)
    a = schedule.alpha_at(t)
    return reverse_mean(l_t, eps_hat, schedule, t) + math.sqrt(1.0 - a) * noise


def _sample_one(params, schedule, maps, shape, seed):
    dtype = params.in_conv.weight.dtype
    gen = torch.Generator().manual_seed(seed)
    l = torch.randn(shape, generator=gen, dtype=dtype)
    for t in range(schedule.T, 0, -1):
        if t > 1:
            noise = torch.randn(shape, generator=gen, dtype=dtype)
        else:
            noise = None
        l = sample_step(params, maps, l, schedule, t, noise)
        if not torch.isfinite(l).all():
            raise NumericError({'message': 'Non-finite raster while sampling',
                                'data': 'seed=%s, t=%d' % (seed, t)})
    return ((l + 1.0) / 2.0).clamp(0.0, 1.0)


def generate(params, schedule, map_raster, count, seed, threads=1):
    """Sample ``count`` trajectory rasters conditioned on ``map_raster``.

    Sample ``i`` draws all of its noise from its own generator seeded from
    ``(seed, i)``, so results do not depend on ``count`` or ``threads``.

    :type map_raster: :class:`trajsynth.raster.RasterGrid`
    :param map_raster: 2-channel map raster.

    :rtype: list
    :return: List of 1-channel :class:`trajsynth.raster.RasterGrid`.
    """

    if count <= 0:
        return []
    if map_raster.channels != 2:
        raise ValidationError('generate needs a 2-channel map raster')
    check_finite(params)
    params.eval()
    n = map_raster.side
    maps = as_tensor(map_raster, params.in_conv.weight.dtype)

    def one(index):
        out = _sample_one(params, schedule, maps, (1, n, n),
                          child_seed(seed, index))
        return RasterGrid(map_raster.extent,
                          out.detach().to(torch.float64).numpy())

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        result = list(pool.map(one, range(count)))
    logger.info("Generated %d rasters over %d steps", count, schedule.T)
    return result


@dataclasses.dataclass(frozen=True)
class OptimizerConfig(object):
    """Adam settings and batch composition.

    :type lr: float
    :param lr: Step size. Default: 1e-4
    """

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 8
    augment: bool = True

    def __post_init__(self):
        if not self.lr > 0 or self.batch_size < 1:
            raise ValidationError('lr must be positive and batch_size >= 1')

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True, eq=False)
class TrainBatch(object):
    """One training batch.

    :type maps: torch.Tensor
    :param maps: ``(B, 2, N, N)`` map rasters.

    :type trajectories: torch.Tensor
    :param trajectories: ``(B, 1, N, N)`` clean rasters in [-1, 1].

    :type t: torch.Tensor
    :param t: ``(B,)`` steps in 1..T.

    :type eps: torch.Tensor
    :param eps: ``(B, 1, N, N)`` standard normal noise.
    """

    maps: torch.Tensor
    trajectories: torch.Tensor
    t: torch.Tensor
    eps: torch.Tensor

    def __post_init__(self):
        b = self.maps.shape[0]
        if (self.trajectories.shape[0] != b or self.t.shape != (b,) or
                self.eps.shape != self.trajectories.shape):
            raise ValidationError('TrainBatch dimensions do not agree')

    def __len__(self):
        return self.maps.shape[0]

    def to(self, dtype):
        return TrainBatch(self.maps.to(dtype), self.trajectories.to(dtype),
                          self.t, self.eps.to(dtype))


def training_pairs(dataset):
    """``(map_raster, trajectory_raster)`` for every trajectory of a
    dataset. All rasters must share one size."""

    pairs = []
    for street_map, trajs in dataset.entries:
        map_raster = rasterize_map(street_map)
        for traj in trajs:
            pairs.append((map_raster,
                          rasterize_trajectory(traj, street_map.extent)))
    if not pairs:
        raise ValidationError('Training dataset has no trajectories')
    sides = {m.side for m, _ in pairs}
    if len(sides) != 1:
        raise ValidationError('Training rasters differ in size: %s' %
                              sorted(sides))
    return pairs


def make_batch(pairs, schedule, rng, batch_size, augment=True):
    """Draw a batch; each pair gets one random D4 element for both
    rasters.

    :type rng: numpy.random.Generator
    :param rng: Source of all batch randomness.
    """

    picks = rng.integers(len(pairs), size=batch_size)
    elements = rng.integers(8, size=batch_size) if augment \
        else np.zeros(batch_size, dtype=int)
    maps, trajs = [], []
    for index, element in zip(picks, elements):
        map_raster, traj_raster = pairs[index]
        if element:
            map_raster = dihedral_transform(map_raster, int(element))
            traj_raster = dihedral_transform(traj_raster, int(element))
        maps.append(map_raster.data)
        trajs.append(traj_raster.data * 2.0 - 1.0)
    t = rng.integers(1, schedule.T + 1, size=batch_size)
    eps = rng.standard_normal((batch_size,) + trajs[0].shape)
    return TrainBatch(torch.from_numpy(np.stack(maps)),
                      torch.from_numpy(np.stack(trajs)),
                      torch.from_numpy(t).long(),
                      torch.from_numpy(eps))


def batch_loss(params, batch, schedule):
    """Mean squared noise-prediction error of a batch, as a tensor."""

    dtype = params.in_conv.weight.dtype
    batch = batch.to(dtype)
    gamma = torch.as_tensor(schedule.gamma, dtype=dtype)[batch.t - 1]
    gamma = gamma[:, None, None, None]
    l_t = gamma.sqrt() * batch.trajectories + (1 - gamma).sqrt() * batch.eps
    pred = params(torch.cat([batch.maps, l_t], dim=1), batch.t)
    return torch.mean((pred - batch.eps) ** 2)


def loss_and_grad(params, batch, schedule):
    """Loss of a batch and its gradient with respect to every parameter.

    :rtype: tuple
    :return: ``(loss, grads)``, ``grads`` a dict keyed by parameter name.
    """

    params.zero_grad(set_to_none=True)
    loss = batch_loss(params, batch, schedule)
    if not torch.isfinite(loss):
        raise NumericError('Non-finite loss')
    loss.backward()
    grads = {name: (p.grad.detach().clone() if p.grad is not None
                    else torch.zeros_like(p))
             for name, p in params.named_parameters()}
    return float(loss.detach()), grads


def _optimizer(params, opt_cfg):
    return torch.optim.Adam(params.parameters(), lr=opt_cfg.lr,
                            betas=(opt_cfg.beta1, opt_cfg.beta2),
                            eps=opt_cfg.eps,
                            weight_decay=opt_cfg.weight_decay)


def _update(params, optimizer, batch, schedule, step):
    optimizer.zero_grad(set_to_none=True)
    loss = batch_loss(params, batch, schedule)
    if not torch.isfinite(loss):
        raise NumericError({'message': 'Training diverged',
                            'data': 'step %d' % step})
    loss.backward()
    optimizer.step()
    value = float(loss.detach())
    logger.debug("step %d loss %.6f", step, value)
    return value


def train(params, dataset, schedule, opt_cfg, steps, seed):
    """Fit the denoiser on a dataset.

    Each step draws a batch with :func:`make_batch` and applies one Adam
    update. The input network is not modified.

    :type params: :class:`trajsynth.denoiser.Denoiser`
    :param params: Starting network.

    :type dataset: :class:`trajsynth.geodata.Dataset`
    :param dataset: Training split.

    :type steps: int
    :param steps: Number of updates.

    :rtype: tuple
    :return: ``(params, loss_log)``, the log a list of ``(step, loss)``.
    """

    pairs = training_pairs(dataset)
    params = copy.deepcopy(params)
    if steps <= 0:
        return params, []
    params.train()
    optimizer = _optimizer(params, opt_cfg)
    rng = np.random.default_rng(seed)
    log = []
    for step in range(1, int(steps) + 1):
        batch = make_batch(pairs, schedule, rng, opt_cfg.batch_size,
                           opt_cfg.augment)
        log.append((step, _update(params, optimizer, batch, schedule, step)))
        if step % 100 == 0:
            logger.info("Training step %d/%d, loss %.5f", step, steps,
                        log[-1][1])
    params.eval()
    return params, log


def train_on_batch(params, batch, schedule, opt_cfg, steps):
    """Repeat Adam updates on one fixed batch."""

    params = copy.deepcopy(params)
    params.train()
    optimizer = _optimizer(params, opt_cfg)
    log = [(step, _update(params, optimizer, batch, schedule, step))
           for step in range(1, int(steps) + 1)]
    params.eval()
    return params, log


def write_loss_log(log, path):
    """Write a `step,loss` CSV file."""

    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['step', 'loss'])
        for step, loss in log:
            writer.writerow([step, repr(float(loss))])
