# -*- encoding: utf-8 -*-
#
# This file is part of trajsynth.
#
# trajsynth is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.


class TrajSynthError(Exception):
    """Base exception of the package.

    Accepts either plain arguments or a single dict with the keys
    ``message``, ``code`` and ``data``.

    :exit codes:
    :2: Usage error
    :3: Validation or parse error
    :4: Runtime or numeric error
    """

    exit_code = 4

    def __init__(self, *args):
        super(TrajSynthError, self).__init__(*args)
        self.message = str(args[0]) if args else ''
        self.code = self.exit_code
        self.data = None
        if len(args) == 1 and isinstance(args[0], dict):
            self.error = args[0]
            self.message = self.error['message']
            self.code = self.error.get('code', self.exit_code)
            self.data = self.error.get('data')

    def __str__(self):
        if self.data is not None:
            return '{0} ({1})'.format(self.message, self.data)
        return self.message


class UsageError(TrajSynthError):
    """Bad command line usage."""
    exit_code = 2


class ParseError(TrajSynthError):
    """Malformed input file."""
    exit_code = 3


class ValidationError(TrajSynthError):
    """Input violates a documented precondition or invariant."""
    exit_code = 3


class NumericError(TrajSynthError):
    """Non-finite loss, parameter or raster."""
    exit_code = 4


class UnreachableError(TrajSynthError):
    """No street path connects two cells."""
    exit_code = 4


class GenerationError(TrajSynthError):
    """A sampled raster holds no usable trajectory."""
    exit_code = 4
