# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
"""Configuration plumbing shared by every command.

Values are resolved with the precedence command line flag > config file >
declared default. Environment variables provide the machine-level defaults.
"""

import dataclasses
import json
import os

from .errors import ParseError, ValidationError
from .logger import get_logger
from .version import __version__

logger = get_logger(__name__)

MANIFEST_NAME = 'run.json'


def default_threads():
    """Worker count. Default: `TRAJSYNTH_THREADS` or the logical core
    count."""

    value = os.environ.get('TRAJSYNTH_THREADS')
    if value:
        try:
            threads = int(value)
        except ValueError:
            raise ValidationError(
                'TRAJSYNTH_THREADS must be an integer, got %r' % value)
        if threads >= 1:
            return threads
    return os.cpu_count() or 1


def default_point_interval():
    """Seconds between consecutive trajectory points.

    The sampling period of the recorded data is unknown, so the default is a
    stand-in. Default: `TRAJSYNTH_POINT_INTERVAL` or 1 s.
    """

    value = os.environ.get('TRAJSYNTH_POINT_INTERVAL')
    if value:
        try:
            interval = float(value)
        except ValueError:
            raise ValidationError(
                'TRAJSYNTH_POINT_INTERVAL must be a number, got %r' % value)
        if interval > 0:
            return interval
    return 1.0


def load_config(path):
    """Load a JSON config file.

    A `run.json` manifest is accepted as well: its ``params`` are flattened
    together with ``seed`` and ``threads`` so a run can be replayed.

    :type path: str
    :param path: Path to the JSON file.

    :rtype: dict
    """

    logger.debug("Used config: %s", path)
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except (OSError, ValueError) as e:
        raise ParseError({'message': 'Unable to read config file',
                          'data': '%s: %s' % (path, e)})

    if not isinstance(data, dict):
        raise ParseError('Config file must hold a JSON object: %s' % path)

    if 'params' in data and isinstance(data['params'], dict):
        flat = dict(data['params'])
        for key in ('seed', 'threads'):
            if key in data:
                flat.setdefault(key, data[key])
        data = flat

    logger.debug("Loaded params: %s", data)
    return data


def resolve(defaults, file_values=None, flag_values=None):
    """Merge defaults, file values and explicit flags.

    Flags holding ``None`` were not given on the command line and do not
    override. Keys unknown to ``defaults`` are rejected.

    :rtype: dict
    """

    result = dict(defaults)
    for source in (file_values or {}, flag_values or {}):
        for key, value in source.items():
            if key not in defaults:
                raise ValidationError('Unknown config key: %s' % key)
            if value is not None:
                result[key] = value
    return result


def from_dict(cls, values):
    """Build dataclass ``cls`` from a dict, ignoring keys it does not
    declare."""

    names = {f.name for f in dataclasses.fields(cls)}
    return cls(**{k: v for k, v in values.items() if k in names})


@dataclasses.dataclass
class RunConfig(object):
    """Fully resolved configuration of one command invocation.

    :type command: str
    :param command: Sub-command name, like `gen-map`.

    :type seed: int
    :param seed: Global seed.

    :type threads: int
    :param threads: Worker count for the parallel parts.

    :type out: str
    :param out: Output directory or file.

    :type params: dict
    :param params: Command-specific parameters.
    """

    command: str
    seed: int
    threads: int
    out: str
    params: dict = dataclasses.field(default_factory=dict)

    def to_dict(self):
        return {'command': self.command,
                'version': __version__,
                'seed': self.seed,
                'threads': self.threads,
                'out': self.out,
                'params': self.params}

    def write_manifest(self, directory):
        """Write `run.json` into ``directory``.

        :rtype: str
        :return: Path of the written manifest.
        """

        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, MANIFEST_NAME)
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write('\n')
        logger.debug("Manifest written: %s", path)
        return path
