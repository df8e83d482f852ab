# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
import logging


class ArraySummaryFilter(logging.Filter):
    """Filter to replace bulky arrays (rasters, tensors) in log arguments
    with a one-line summary."""

    def __init__(self, *args, **kwargs):
        super(ArraySummaryFilter, self).__init__(*args, **kwargs)
        self.summarize = ArraySummaryService.summarize

    def filter(self, record):
        if record.args and isinstance(record.args, tuple):
            record.args = tuple(self.summarize(arg) for arg in record.args)

        return True


class ArraySummaryService(object):
    """
    Service to shorten numpy arrays and torch tensors for logging.
    Call classmethod summarize(value)
    """

    MAX_INLINE = 8

    @classmethod
    def summarize(cls, value):
        shape = getattr(value, 'shape', None)
        if shape is None or not hasattr(value, 'dtype'):
            return value

        size = 1
        for dim in shape:
            size *= int(dim)
        if size <= cls.MAX_INLINE:
            return value

        data = value.detach() if hasattr(value, 'detach') else value
        return 'array(shape={0}, dtype={1}, min={2:.4g}, max={3:.4g})'.format(
            tuple(int(d) for d in shape), data.dtype,
            float(data.min()), float(data.max()))


def get_logger(name):
    """Return the module logger, silent unless the application adds
    handlers.

    :type name: str
    :param name: Logger name, normally ``__name__``.
    """

    logger = logging.getLogger(name)
    if not any(isinstance(h, logging.NullHandler) for h in logger.handlers):
        logger.addHandler(logging.NullHandler())
    if not any(isinstance(f, ArraySummaryFilter) for f in logger.filters):
        logger.addFilter(ArraySummaryFilter())
    return logger
