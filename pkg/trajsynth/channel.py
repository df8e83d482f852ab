# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Radio geometry: cell layout, path loss and shadow fading."""

import dataclasses
import math

import numpy as np

from .errors import ValidationError
from .logger import get_logger

logger = get_logger(__name__)


@dataclasses.dataclass(frozen=True)
class Band(object):
    """Carrier shared by every station.

    :type carrier_ghz: float
    :param carrier_ghz: Carrier frequency, GHz.

    :type bandwidth_hz: float
    :param bandwidth_hz: Bandwidth, Hz.

    :type tx_power_dbm: float
    :param tx_power_dbm: Station transmit power, dBm.

    :type noise_figure_db: float
    :param noise_figure_db: Receiver noise figure, dB.
    """

    carrier_ghz: float
    bandwidth_hz: float
    tx_power_dbm: float = 43.0
    noise_figure_db: float = 9.0

    def __post_init__(self):
        if not self.carrier_ghz > 0 or not self.bandwidth_hz > 0:
            raise ValidationError('Band carrier and bandwidth must be '
                                  'positive')

    def noise_dbm(self, density_dbm_hz=-174.0):
        """Thermal noise power over the band."""
        return (density_dbm_hz + 10.0 * math.log10(self.bandwidth_hz) +
                self.noise_figure_db)

    def to_dict(self):
        return dataclasses.asdict(self)


DEFAULT_BANDS = (Band(3.7, 40e6, 43.0, 9.0), Band(0.7, 10e6, 40.0, 9.0))


@dataclasses.dataclass(frozen=True)
class BaseStation(object):
    """Macro cell site radiating on every band."""

    id: int
    x: float
    y: float
    height: float = 25.0

    def __post_init__(self):
        if not self.height > 0:
            raise ValidationError('Station height must be positive')

    @property
    def position(self):
        return self.x, self.y


def hex_layout(extent, spacing, height=25.0):
    """Stations on a triangular lattice over the extent.

    Rows are ``spacing * sqrt(3) / 2`` apart and odd rows shift by
    ``spacing / 2``, so every nearest neighbor is ``spacing`` away. The
    lattice covers the extent plus one guard ring of sites. Ids follow row
    major order from the south-west corner.

    :type extent: :class:`trajsynth.geodata.Extent`
    :param extent: Area served.

    :type spacing: float
    :param spacing: Inter-site distance, meters.

    :rtype: list
    :return: List of :class:`BaseStation`.
    """

    if not spacing > 0:
        raise ValidationError('spacing must be positive')
    pitch = spacing * math.sqrt(3.0) / 2.0
    rows = int(math.floor(extent.side / pitch + 1e-9))
    cols = int(math.floor(extent.side / spacing + 1e-9))

    stations = []
    for j in range(-1, rows + 2):
        shift = spacing / 2.0 if j % 2 else 0.0
        for i in range(-1, cols + 2):
            stations.append(BaseStation(
                len(stations), extent.origin_x + i * spacing + shift,
                extent.origin_y + j * pitch, height))
    logger.debug("Hex layout: %d stations, spacing %s", len(stations),
                 spacing)
    return stations


def pathloss_db(band, d2d, bs_height=25.0, ut_height=1.5):
    """Urban macro NLOS path loss.

    ``PL = 13.54 + 39.08 log10(d3D) + 20 log10(f_GHz) - 0.6 (h_ut - 1.5)``

    :type d2d: float or numpy.ndarray
    :param d2d: Ground distance, at least 1 m.

    :rtype: float or numpy.ndarray
    """

    d = np.asarray(d2d, dtype=np.float64)
    if np.any(d < 1.0):
        raise ValidationError({'message': 'Path loss needs d2d >= 1 m',
                               'data': 'min d2d=%s' % float(np.min(d))})
    d3d = np.sqrt(d * d + (bs_height - ut_height) ** 2)
    pl = (13.54 + 39.08 * np.log10(d3d) +
          20.0 * math.log10(band.carrier_ghz) - 0.6 * (ut_height - 1.5))
    return float(pl) if pl.ndim == 0 else pl


@dataclasses.dataclass(frozen=True, eq=False)
class SinusoidSet(object):
    """Components of one field: wave vectors ``(N, 2)`` and phases."""

    wavevectors: np.ndarray
    phases: np.ndarray

    def __len__(self):
        return len(self.phases)


def exponential_wavenumbers(u, decorr_m):
    """Wavenumbers whose isotropic 2D field decorrelates as
    ``exp(-d / decorr_m)``, from uniform quantiles ``u`` in [0, 1)."""

    u = np.asarray(u, dtype=np.float64)
    return np.sqrt(1.0 / (1.0 - u) ** 2 - 1.0) / decorr_m


class ShadowField(object):
    """Spatially correlated log-normal shadowing, one field per
    ``(station, band)``.

    Each field is ``sigma * sqrt(2/N) * sum_k cos(k_k . p + phi_k)``. Wave
    number magnitudes and directions come from jittered equal-probability
    strata, phases are uniform.

    :type sigma_db: float
    :param sigma_db: Standard deviation, dB. Default: 6

    :type decorr_m: float
    :param decorr_m: Decorrelation distance, meters. Default: 50

    >>> from trajsynth.channel import ShadowField
    >>> field = ShadowField.build([(0, 0)], seed=7)
    >>> value = field.shadow_db(0, 0, (10.0, 20.0))
    """

    def __init__(self, components, sigma_db=6.0, decorr_m=50.0):
        self.components = dict(components)
        self.sigma_db = float(sigma_db)
        self.decorr_m = float(decorr_m)

    @classmethod
    def build(cls, keys, sigma_db=6.0, decorr_m=50.0, n_sinusoids=100,
              seed=0):
        """Independent fields for every ``(station, band)`` key."""

        if n_sinusoids < 1 or not decorr_m > 0 or sigma_db < 0:
            raise ValidationError('Bad shadow field parameters')
        rng = np.random.default_rng(seed)
        strata = np.arange(n_sinusoids)
        components = {}
        for key in keys:
            u = (strata + rng.uniform(size=n_sinusoids)) / n_sinusoids
            k = exponential_wavenumbers(u, decorr_m)
            theta = 2.0 * math.pi * (strata + rng.uniform(size=n_sinusoids)) \
                / n_sinusoids
            rng.shuffle(theta)
            wavevectors = np.stack([k * np.cos(theta), k * np.sin(theta)],
                                   axis=1)
            phases = rng.uniform(0.0, 2.0 * math.pi, size=n_sinusoids)
            components[tuple(key)] = SinusoidSet(wavevectors, phases)
        return cls(components, sigma_db, decorr_m)

    @classmethod
    def from_components(cls, components, sigma_db=6.0, decorr_m=50.0):
        """Field from explicit ``{key: (wavevectors, phases)}``."""

        return cls({tuple(key): SinusoidSet(
            np.asarray(wv, dtype=np.float64).reshape(-1, 2),
            np.asarray(ph, dtype=np.float64).ravel())
            for key, (wv, ph) in components.items()}, sigma_db, decorr_m)

    def shadow_db(self, station, band, positions):
        """Shadowing at one position or an ``(n, 2)`` array of them."""

        try:
            comp = self.components[(station, band)]
        except KeyError:
            raise ValidationError({'message': 'No shadow field for key',
                                   'data': '(%s, %s)' % (station, band)})
        pts = np.asarray(positions, dtype=np.float64)
        single = pts.ndim == 1
        pts = pts.reshape(-1, 2)
        values = (self.sigma_db * math.sqrt(2.0 / len(comp)) *
                  np.cos(pts @ comp.wavevectors.T + comp.phases).sum(axis=1))
        return float(values[0]) if single else values


def shadow_db(field, station, band, position):
    """Shadowing of ``(station, band)`` at ``position``, dB."""

    return field.shadow_db(station, band, position)
