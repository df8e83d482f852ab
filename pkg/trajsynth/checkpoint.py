# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Self-describing checkpoint files.

Layout::

    b'TSCK\\x01'            magic, 5 bytes
    <Q                      header length in bytes, little-endian uint64
    header                  UTF-8 JSON: version, schedule, network config,
                            tensor names and shapes, free-form extras
    data                    every tensor in header order, float32 '<f4'

A file is accepted when its magic matches and its major version equals the
running package's.
"""

import json
import struct

import numpy as np
import torch
from packaging.version import InvalidVersion, Version

from .denoiser import DenoiserConfig, build_denoiser
from .diffusion import NoiseSchedule
from .errors import ParseError
from .logger import get_logger
from .version import __version__

logger = get_logger(__name__)

MAGIC = b'TSCK\x01'
LENGTH = struct.Struct('<Q')


def _packet(header, blobs):
    body = json.dumps(header, sort_keys=True).encode('utf-8')
    return MAGIC + LENGTH.pack(len(body)) + body + b''.join(blobs)


def save_checkpoint(path, params, schedule, extra=None):
    """Write network weights and the noise schedule.

    :type path: str
    :param path: Output file.

    :type params: :class:`trajsynth.denoiser.Denoiser`
    :param params: Network.

    :type schedule: :class:`trajsynth.diffusion.NoiseSchedule`
    :param schedule: Schedule the network was trained with.

    :type extra: dict
    :param extra: JSON-serializable metadata, like training steps.
    """

    tensors, blobs = [], []
    for name, value in params.state_dict().items():
        array = value.detach().cpu().numpy().astype('<f4')
        tensors.append({'name': name, 'shape': list(array.shape)})
        blobs.append(array.tobytes(order='C'))
    header = {'version': __version__,
              'schedule': schedule.to_dict(),
              'config': params.config.to_dict(),
              'tensors': tensors,
              'extra': extra or {}}
    with open(path, 'wb') as f:
        f.write(_packet(header, blobs))
    logger.debug("Checkpoint written: %s (%d tensors)", path, len(tensors))


def _check_version(found):
    try:
        found_major = Version(str(found)).major
    except InvalidVersion:
        raise ParseError('Bad checkpoint version: %r' % found)
    if found_major != Version(__version__).major:
        raise ParseError({'message': 'Incompatible checkpoint version',
                          'data': 'file %s, package %s' % (found,
                                                           __version__)})


def read_header(raw):
    """Split raw checkpoint bytes into ``(header, data)``."""

    if len(raw) < len(MAGIC) + LENGTH.size or not raw.startswith(MAGIC):
        raise ParseError('Not a checkpoint file (bad magic)')
    start = len(MAGIC) + LENGTH.size
    size = LENGTH.unpack(raw[len(MAGIC):start])[0]
    if start + size > len(raw):
        raise ParseError('Truncated checkpoint header')
    try:
        header = json.loads(raw[start:start + size].decode('utf-8'))
    except ValueError as e:
        raise ParseError({'message': 'Bad checkpoint header', 'data': str(e)})
    _check_version(header.get('version'))
    return header, raw[start + size:]


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`.

    :rtype: tuple
    :return: ``(params, schedule, header)``.
    """

    try:
        with open(path, 'rb') as f:
            raw = f.read()
    except OSError as e:
        raise ParseError({'message': 'Unable to read checkpoint',
                          'data': '%s: %s' % (path, e)})
    header, data = read_header(raw)

    try:
        config = DenoiserConfig(**header['config'])
        schedule = NoiseSchedule.from_alpha(header['schedule']['alpha'])
        specs = header['tensors']
    except (KeyError, TypeError) as e:
        raise ParseError({'message': 'Incomplete checkpoint header',
                          'data': str(e)})

    params = build_denoiser(config)
    state = {}
    offset = 0
    for spec in specs:
        count = int(np.prod(spec['shape'], dtype=np.int64))
        end = offset + 4 * count
        if end > len(data):
            raise ParseError('Truncated checkpoint data at %s' % spec['name'])
        array = np.frombuffer(data[offset:end], dtype='<f4')
        state[spec['name']] = torch.from_numpy(
            array.reshape(spec['shape']).astype(np.float32))
        offset = end
    if offset != len(data):
        raise ParseError('Trailing bytes after checkpoint data')
    try:
        params.load_state_dict(state)
    except RuntimeError as e:
        raise ParseError({'message': 'Checkpoint does not fit the network',
                          'data': str(e)})
    params.eval()
    logger.debug("Checkpoint loaded: %s", path)
    return params, schedule, header
