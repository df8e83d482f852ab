import math

import numpy as np

from unittest import TestCase

from trajsynth.channel import DEFAULT_BANDS, Band, BaseStation, \
    ShadowField, exponential_wavenumbers, hex_layout, pathloss_db
from trajsynth.errors import ValidationError
from trajsynth.geodata import Extent


class TestBand(TestCase):

    def test_noise(self):
        band = Band(3.7, 40e6, noise_figure_db=9.0)

        self.assertAlmostEqual(band.noise_dbm(), -174 + 76.0206 + 9,
                               places=3)

    def test_invalid(self):
        with self.assertRaises(ValidationError):
            Band(0, 10e6)
        with self.assertRaises(ValidationError):
            BaseStation(0, 0.0, 0.0, height=0)


class TestHexLayout(TestCase):

    def test_spacing(self):
        stations = hex_layout(Extent(0, 0, 2000, 10), 500.0)
        xy = np.array([s.position for s in stations])
        d = np.hypot(xy[:, None, 0] - xy[None, :, 0],
                     xy[:, None, 1] - xy[None, :, 1])
        np.fill_diagonal(d, np.inf)

        np.testing.assert_allclose(d.min(axis=1), 500.0)
        self.assertEqual([s.id for s in stations], list(range(len(stations))))

    def test_guard_ring(self):
        extent = Extent(0, 0, 1000, 10)
        xy = np.array([s.position for s in hex_layout(extent, 250.0)])

        self.assertLess(xy[:, 0].min(), 0)
        self.assertLess(xy[:, 1].min(), 0)
        self.assertGreater(xy[:, 0].max(), 1000)
        self.assertGreater(xy[:, 1].max(), 1000)

    def test_invalid(self):
        with self.assertRaises(ValidationError):
            hex_layout(Extent(0, 0, 1000, 10), 0)


class TestPathloss(TestCase):

    def test_reference_value(self):
        band = Band(3.7, 40e6)
        d2d = math.sqrt(100.0 ** 2 - 23.5 ** 2)

        self.assertAlmostEqual(pathloss_db(band, d2d), 103.06, delta=0.01)

    def test_monotone(self):
        band = DEFAULT_BANDS[0]
        pl = pathloss_db(band, np.array([1.0, 10.0, 100.0, 1000.0]))

        self.assertTrue(np.all(np.diff(pl) > 0))

    def test_frequency(self):
        low, high = DEFAULT_BANDS[1], DEFAULT_BANDS[0]

        self.assertAlmostEqual(
            pathloss_db(high, 200.0) - pathloss_db(low, 200.0),
            20 * math.log10(3.7 / 0.7), places=9)

    def test_too_close(self):
        with self.assertRaises(ValidationError):
            pathloss_db(DEFAULT_BANDS[0], 0.5)


class TestShadowField(TestCase):

    def setUp(self):
        self.keys = [(s, b) for s in range(4) for b in range(2)]
        self.field = ShadowField.build(self.keys, seed=3)
        self.positions = np.random.default_rng(0).uniform(
            0, 20000, size=(100000, 2))

    def test_wavenumbers(self):
        self.assertEqual(float(exponential_wavenumbers(0.0, 50.0)), 0.0)
        k = exponential_wavenumbers(np.linspace(0, 0.99, 50), 50.0)
        self.assertTrue(np.all(np.diff(k) > 0))

    def test_std(self):
        values = np.concatenate([self.field.shadow_db(s, b, self.positions)
                                 for s, b in self.keys])

        self.assertAlmostEqual(np.std(values) / 6.0, 1.0, delta=0.1)

    def test_autocorrelation(self):
        corr = []
        for s, b in self.keys:
            base = self.field.shadow_db(s, b, self.positions)
            for angle in np.linspace(0, np.pi, 8, endpoint=False):
                shift = 50.0 * np.array([np.cos(angle), np.sin(angle)])
                moved = self.field.shadow_db(s, b, self.positions + shift)
                corr.append(np.corrcoef(base, moved)[0, 1])

        self.assertAlmostEqual(np.mean(corr), math.exp(-1), delta=0.1)

    def test_single_position(self):
        value = self.field.shadow_db(0, 1, (10.0, 20.0))
        array = self.field.shadow_db(0, 1, np.array([[10.0, 20.0]]))

        self.assertIsInstance(value, float)
        self.assertEqual(value, array[0])

    def test_deterministic(self):
        other = ShadowField.build(self.keys, seed=3)

        self.assertEqual(self.field.shadow_db(2, 0, (5.0, 5.0)),
                         other.shadow_db(2, 0, (5.0, 5.0)))

    def test_from_components(self):
        field = ShadowField.from_components(
            {(0, 0): ([[0.0, 0.0]], [0.0])}, sigma_db=3.0)

        self.assertAlmostEqual(field.shadow_db(0, 0, (7.0, 9.0)),
                               3.0 * math.sqrt(2.0))

    def test_unknown_key(self):
        with self.assertRaises(ValidationError):
            self.field.shadow_db(9, 0, (0.0, 0.0))

    def test_bad_parameters(self):
        with self.assertRaises(ValidationError):
            ShadowField.build(self.keys, decorr_m=0)
        with self.assertRaises(ValidationError):
            ShadowField.build(self.keys, n_sinusoids=0)
