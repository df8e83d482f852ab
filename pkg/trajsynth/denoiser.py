# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Noise-prediction network conditioned on a street map.

The input is the 2-channel map raster concatenated with the noisy
1-channel trajectory raster. The network is U-shaped: residual blocks with
group normalization on each level, one self-attention block at the lowest
resolution, and skip connections between matching encoder and decoder
levels. The diffusion step enters every residual block through a
sinusoidal embedding.
"""

import dataclasses
import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import NumericError, ValidationError
from .logger import get_logger

logger = get_logger(__name__)

MAP_CHANNELS = 2
TRAJ_CHANNELS = 1


@dataclasses.dataclass(frozen=True)
class DenoiserConfig(object):
    """Network size.

    :type depth: int
    :param depth: Number of resolution levels. Default: 2

    :type width: int
    :param width: Channels on the first level; level ``i`` has
        ``width * min(2**i, 4)``. Default: 8

    :type groups: int
    :param groups: Group normalization groups. Default: 8
    """

    depth: int = 2
    width: int = 8
    groups: int = 8

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.groups < 1:
            raise ValidationError('depth, width and groups must be positive')
        for ch in self.channels:
            if ch % self.groups:
                raise ValidationError({
                    'message': 'Channel count not divisible by groups',
                    'data': 'channels=%d, groups=%d' % (ch, self.groups)})

    @property
    def channels(self):
        return [self.width * min(2 ** i, 4) for i in range(self.depth)]

    @property
    def time_dim(self):
        return 4 * self.width

    @classmethod
    def full(cls):
        """Size used for full runs."""
        return cls(depth=4, width=64)

    def to_dict(self):
        return dataclasses.asdict(self)


def timestep_embedding(t, dim, scale=10000.0):
    """Sinusoidal embedding of integer diffusion steps, ``(B, dim)``."""

    half = dim // 2
    freq = math.log(scale) / max(half - 1, 1)
    freq = torch.exp(torch.arange(half, dtype=torch.float64) * -freq)
    emb = t.to(torch.float64)[:, None] * freq[None, :]
    emb = torch.cat([torch.sin(emb), torch.cos(emb)], dim=-1)
    if dim % 2 == 1:
        emb = F.pad(emb, (0, 1))
    return emb


class ResidualBlock(nn.Module):

    def __init__(self, in_ch, out_ch, time_dim, groups):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.temb_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = nn.GroupNorm(groups, out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        if in_ch != out_ch:
            self.shortcut = nn.Conv2d(in_ch, out_ch, 1)
        else:
            self.shortcut = nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb_proj(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.shortcut(x) + h


class SelfAttention(nn.Module):
    """Single-head self-attention over all positions."""

    def __init__(self, channels, groups):
        super().__init__()
        self.norm = nn.GroupNorm(groups, channels)
        self.qkv = nn.Conv2d(channels, 3 * channels, 1)
        self.proj_out = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        b, c, h, w = x.shape
        q, k, v = self.qkv(self.norm(x)).reshape(b, 3, c, h * w).unbind(1)
        attn = torch.softmax(torch.bmm(q.transpose(1, 2), k) * c ** -0.5,
                             dim=-1)
        out = torch.bmm(v, attn.transpose(1, 2)).reshape(b, c, h, w)
        return x + self.proj_out(out)


class Denoiser(nn.Module):
    """Noise predictor ``f(map, l_t, t)``.

    :type config: :class:`DenoiserConfig`
    :param config: Network size.

    >>> from trajsynth.denoiser import DenoiserConfig, build_denoiser
    >>> net = build_denoiser(DenoiserConfig(), seed=0)
    """

    def __init__(self, config):
        super().__init__()
        self.config = config
        chs = config.channels
        g, tdim = config.groups, config.time_dim

        self.time_mlp = nn.Sequential(
            nn.Linear(config.width, tdim), nn.SiLU(), nn.Linear(tdim, tdim))
        self.in_conv = nn.Conv2d(MAP_CHANNELS + TRAJ_CHANNELS, chs[0], 3,
                                 padding=1)

        self.down_blocks = nn.ModuleList()
        self.downsample = nn.ModuleList()
        prev = chs[0]
        for ch in chs:
            self.down_blocks.append(ResidualBlock(prev, ch, tdim, g))
            self.downsample.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
            prev = ch

        self.mid_block1 = ResidualBlock(prev, prev, tdim, g)
        self.mid_attn = SelfAttention(prev, g)
        self.mid_block2 = ResidualBlock(prev, prev, tdim, g)

        self.upsample = nn.ModuleList()
        self.up_blocks = nn.ModuleList()
        for ch in reversed(chs):
            self.upsample.append(nn.Conv2d(prev, prev, 3, padding=1))
            self.up_blocks.append(ResidualBlock(prev + ch, ch, tdim, g))
            prev = ch

        self.out_norm = nn.GroupNorm(g, chs[0])
        self.out_conv = nn.Conv2d(chs[0], TRAJ_CHANNELS, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def forward(self, x, t):
        dtype = self.in_conv.weight.dtype
        temb = self.time_mlp(timestep_embedding(t, self.config.width)
                             .to(dtype))
        h = self.in_conv(x)
        skips = []
        for block, down in zip(self.down_blocks, self.downsample):
            h = block(h, temb)
            skips.append(h)
            h = down(h)

        h = self.mid_block1(h, temb)
        h = self.mid_attn(h)
        h = self.mid_block2(h, temb)

        for block, up in zip(self.up_blocks, self.upsample):
            h = up(F.interpolate(h, scale_factor=2, mode='nearest'))
            h = block(torch.cat([h, skips.pop()], dim=1), temb)

        return self.out_conv(F.silu(self.out_norm(h)))


# Learnable tensors of a Denoiser are addressed through the module itself.
DenoiserParams = Denoiser


def build_denoiser(config=None, seed=0, dtype=torch.float32):
    """Fresh network with a zero final layer.

    Initialization draws from a forked torch RNG seeded with ``seed``; the
    global torch RNG state is left untouched.
    """

    config = config or DenoiserConfig()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        net = Denoiser(config)
    net = net.to(dtype)
    logger.debug("Denoiser built: %s, %d parameters", config,
                 sum(p.numel() for p in net.parameters()))
    return net


def as_tensor(values, dtype):
    if isinstance(values, torch.Tensor):
        return values.to(dtype)
    if hasattr(values, 'extent'):
        values = values.data
    return torch.as_tensor(np.asarray(values), dtype=dtype)


def check_finite(params):
    for name, p in params.named_parameters():
        if not torch.isfinite(p).all():
            raise NumericError({'message': 'Non-finite parameter',
                                'data': name})


def denoiser_apply(params, maps, l_t, t):
    """Predict the noise in ``l_t`` given the map.

    Accepts single samples (``(2, N, N)`` map, ``(1, N, N)`` trajectory) or
    batches with a leading batch axis; rasters may be
    :class:`trajsynth.raster.RasterGrid`, numpy arrays or tensors.

    :type params: :class:`Denoiser`
    :param params: Network.

    :type t: int
    :param t: Diffusion step, or a ``(B,)`` tensor of steps.

    :rtype: torch.Tensor
    :return: Prediction shaped like ``l_t``.
    """

    dtype = params.in_conv.weight.dtype
    maps, l_t = as_tensor(maps, dtype), as_tensor(l_t, dtype)
    single = l_t.dim() == 3
    if single:
        maps, l_t = maps[None], l_t[None]
    if (maps.dim() != 4 or l_t.dim() != 4 or
            maps.shape[1] != MAP_CHANNELS or l_t.shape[1] != TRAJ_CHANNELS or
            maps.shape[0] != l_t.shape[0] or maps.shape[2:] != l_t.shape[2:]):
        raise ValidationError({'message': 'Denoiser input shape mismatch',
                               'data': 'map=%s, l_t=%s' % (
                                   tuple(maps.shape), tuple(l_t.shape))})
    size = l_t.shape[-1]
    stride = 2 ** params.config.depth
    if l_t.shape[-2] != size or size % stride:
        raise ValidationError({
            'message': 'Raster side must be divisible by 2**depth',
            'data': 'side=%d, depth=%d' % (size, params.config.depth)})
    check_finite(params)

    if not isinstance(t, torch.Tensor):
        t = torch.full((l_t.shape[0],), int(t), dtype=torch.long)
    out = params(torch.cat([maps, l_t], dim=1), t)
    if not torch.isfinite(out).all():
        raise NumericError('Non-finite denoiser output')
    return out[0] if single else out
