import logging
import unittest

import numpy as np
import torch

from trajsynth.logger import ArraySummaryFilter, ArraySummaryService, \
    get_logger


class TestArraySummaryFilter(unittest.TestCase):

    def test_summarize_large_array(self):
        value = np.arange(64, dtype=np.float64).reshape(8, 8)
        expected = 'array(shape=(8, 8), dtype=float64, min=0, max=63)'

        self.assertEqual(ArraySummaryService.summarize(value), expected)

    def test_summarize_tensor(self):
        value = torch.zeros(2, 3, 4)
        result = ArraySummaryService.summarize(value)

        self.assertTrue(result.startswith('array(shape=(2, 3, 4)'))
        self.assertIn('min=0', result)

    def test_small_and_plain_values_pass(self):
        small = np.ones(ArraySummaryService.MAX_INLINE)

        self.assertIs(ArraySummaryService.summarize(small), small)
        self.assertEqual(ArraySummaryService.summarize('text'), 'text')
        self.assertEqual(ArraySummaryService.summarize(42), 42)

    def test_filter_rewrites_record_args(self):
        record = logging.LogRecord('trajsynth', logging.DEBUG, __file__, 1,
                                   'raster %s step %s',
                                   (np.zeros((16, 16)), 3), None)

        self.assertTrue(ArraySummaryFilter().filter(record))
        self.assertEqual(record.getMessage(),
                         'raster array(shape=(16, 16), dtype=float64, '
                         'min=0, max=0) step 3')

    def test_get_logger_is_idempotent(self):
        first = get_logger('trajsynth.test_logger')
        second = get_logger('trajsynth.test_logger')

        self.assertIs(first, second)
        self.assertEqual(len(second.handlers), 1)
        self.assertIsInstance(second.handlers[0], logging.NullHandler)
        self.assertEqual(len(second.filters), 1)
