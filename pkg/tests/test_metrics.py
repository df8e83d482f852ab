import functools
import json
import math
import os
import shutil
import tempfile

import numpy as np

from unittest import TestCase

from trajsynth.errors import ValidationError
from trajsynth.geodata import Extent, Trajectory, synth_map, \
    synth_trajectories
from trajsynth.metrics import Heatmap, SimilarityReport, cosine_sim, dtw, \
    edr, evaluate_sets, heatmap_from, min_pair_scores, save_heatmap, \
    sliced_wasserstein

EXTENT = Extent(0, 0, 80, 10)


def edr_oracle(a, b, tau):
    @functools.lru_cache(maxsize=None)
    def cost(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        d2 = float(np.sum((a[i - 1] - b[j - 1]) ** 2))
        sub = 0 if d2 < tau * tau else 1
        return min(cost(i - 1, j - 1) + sub, cost(i - 1, j) + 1,
                   cost(i, j - 1) + 1)
    return cost(len(a), len(b))


def dtw_oracle(a, b):
    """Minimum over every monotone boundary-aligned warping path."""

    def paths(i, j):
        here = float(np.sum((a[i] - b[j]) ** 2))
        if i == 0 and j == 0:
            yield here
            return
        if i > 0:
            for rest in paths(i - 1, j):
                yield rest + here
        if j > 0:
            for rest in paths(i, j - 1):
                yield rest + here
        if i > 0 and j > 0:
            for rest in paths(i - 1, j - 1):
                yield rest + here
    return min(paths(len(a) - 1, len(b) - 1))


def cells_heatmap(cells, extent=EXTENT):
    data = np.zeros((extent.n, extent.n))
    for cell in cells:
        data[cell] = 1.0
    return Heatmap(data / data.sum(), extent)


class TestEdr(TestCase):

    def test_identity(self):
        traj = Trajectory([(0, 0), (10, 5), (40, 40)])

        self.assertEqual(edr(traj, traj), 0)

    def test_empty(self):
        b = np.array([(0, 0), (10, 0), (20, 0)], dtype=float)

        self.assertEqual(edr(np.zeros((0, 2)), b), 3)
        self.assertEqual(edr(b, np.zeros((0, 2))), 3)

    def test_single_mismatch(self):
        self.assertEqual(edr(Trajectory([(0, 0)]), Trajectory([(30, 0)]),
                             20), 1)

    def test_threshold_is_strict(self):
        self.assertEqual(edr(Trajectory([(0, 0)]), Trajectory([(20, 0)]),
                             20), 1)
        self.assertEqual(edr(Trajectory([(0, 0)]), Trajectory([(19.99, 0)]),
                             20), 0)

    def test_bad_tau(self):
        with self.assertRaises(ValidationError):
            edr(Trajectory([(0, 0)]), Trajectory([(0, 0)]), 0)

    def test_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            a = rng.uniform(0, 60, size=(rng.integers(0, 7), 2))
            b = rng.uniform(0, 60, size=(rng.integers(0, 7), 2))
            value = edr(a, b, 20.0)

            self.assertEqual(value, edr_oracle(a, b, 20.0))
            self.assertEqual(value, edr(b, a, 20.0))
            self.assertLessEqual(value, len(a) + len(b))


class TestDtw(TestCase):

    def test_identity(self):
        traj = Trajectory([(0, 0), (10, 5), (40, 40)])

        self.assertEqual(dtw(traj, traj), 0.0)

    def test_repeated_point(self):
        self.assertEqual(dtw(Trajectory([(0, 0), (10, 0)]),
                             Trajectory([(0, 0), (0, 0), (10, 0)])), 0.0)

    def test_values(self):
        self.assertEqual(dtw(Trajectory([(0, 0), (10, 0)]),
                             Trajectory([(0, 0), (30, 0)])), 400.0)

    def test_empty(self):
        with self.assertRaises(ValidationError):
            dtw(np.zeros((0, 2)), Trajectory([(0, 0)]))

    def test_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            a = rng.uniform(0, 60, size=(rng.integers(1, 7), 2))
            b = rng.uniform(0, 60, size=(rng.integers(1, 7), 2))
            value = dtw(a, b)

            self.assertAlmostEqual(value, dtw_oracle(a, b), delta=1e-6)
            self.assertAlmostEqual(value, dtw(b, a), delta=1e-6)


class TestHeatmap(TestCase):

    def test_single_point(self):
        heat = heatmap_from([Trajectory([(15, 25)])], EXTENT)

        self.assertEqual(heat.data[2, 1], 1.0)
        self.assertEqual(heat.data.sum(), 1.0)

    def test_duplicates(self):
        trajs = [Trajectory([(5, 5), (45, 5)]), Trajectory([(75, 75)])]

        np.testing.assert_array_equal(heatmap_from(trajs, EXTENT).data,
                                      heatmap_from(trajs * 2, EXTENT).data)

    def test_two_cells(self):
        heat = heatmap_from([Trajectory([(5, 5)]), Trajectory([(75, 75)])],
                            EXTENT)

        self.assertEqual(heat.data[0, 0], 0.5)
        self.assertEqual(heat.data[7, 7], 0.5)

    def test_empty(self):
        heat = heatmap_from([], EXTENT)

        self.assertTrue(heat.is_empty())

    def test_mass(self):
        with self.assertRaises(ValidationError):
            Heatmap(np.full((8, 8), 0.5), EXTENT)
        with self.assertRaises(ValidationError):
            Heatmap(-np.ones((8, 8)) / 64, EXTENT)

    def test_save(self):
        tmp = tempfile.mkdtemp()
        try:
            heat = heatmap_from([Trajectory([(5, 5), (45, 5)])], EXTENT)
            path = os.path.join(tmp, 'heat.npy')
            save_heatmap(heat, path)

            np.testing.assert_array_equal(np.load(path), heat.data)
        finally:
            shutil.rmtree(tmp)


class TestCosine(TestCase):

    def test_equal(self):
        p = cells_heatmap([(0, 0), (3, 4)])

        self.assertAlmostEqual(cosine_sim(p, p), 1.0, delta=1e-12)

    def test_disjoint(self):
        self.assertEqual(cosine_sim(cells_heatmap([(0, 0)]),
                                    cells_heatmap([(1, 1)])), 0.0)

    def test_subset(self):
        p = cells_heatmap([(0, 0), (0, 1)])
        q = cells_heatmap([(0, 0), (0, 1), (5, 5), (6, 6)])

        self.assertAlmostEqual(cosine_sim(p, q), 1 / math.sqrt(2),
                               delta=1e-9)

    def test_zero(self):
        with self.assertRaises(ValidationError):
            cosine_sim(heatmap_from([], EXTENT), cells_heatmap([(0, 0)]))


class TestSlicedWasserstein(TestCase):

    def test_identical(self):
        p = cells_heatmap([(0, 0), (4, 6), (7, 1)])

        self.assertAlmostEqual(sliced_wasserstein(p, p), 0.0, delta=1e-9)

    def test_point_masses(self):
        p, q = cells_heatmap([(0, 0)]), cells_heatmap([(0, 1)])
        value = sliced_wasserstein(p, q, 500, seed=0)

        self.assertAlmostEqual(value / (10 / math.sqrt(2)), 1.0, delta=0.05)

    def test_symmetric(self):
        p = cells_heatmap([(0, 0), (2, 5)])
        q = cells_heatmap([(6, 6), (1, 7), (3, 3)])

        self.assertAlmostEqual(sliced_wasserstein(p, q, 200, 3),
                               sliced_wasserstein(q, p, 200, 3), delta=1e-9)

    def test_scaling(self):
        cells = ([(0, 0), (2, 5)], [(6, 6), (1, 7)])
        small = [cells_heatmap(c, Extent(0, 0, 80, 10)) for c in cells]
        large = [cells_heatmap(c, Extent(0, 0, 160, 20)) for c in cells]

        self.assertAlmostEqual(sliced_wasserstein(*large, n_proj=300, seed=1),
                               2 * sliced_wasserstein(*small, n_proj=300,
                                                      seed=1), delta=1e-6)

    def test_errors(self):
        p = cells_heatmap([(0, 0)])

        with self.assertRaises(ValidationError):
            sliced_wasserstein(p, heatmap_from([], EXTENT))
        with self.assertRaises(ValidationError):
            sliced_wasserstein(p, p, n_proj=0)


class TestEvaluateSets(TestCase):

    def setUp(self):
        self.street_map = synth_map(0, Extent(0, 0, 320, 10), 80, 2)
        self.reference = synth_trajectories(self.street_map, 12, 0)

    def test_same_set(self):
        report = evaluate_sets(self.reference, self.reference,
                               self.street_map.extent, n_proj=50)

        self.assertEqual(report.edr_mean, 0.0)
        self.assertEqual(report.dtw_mean, 0.0)
        self.assertAlmostEqual(report.cosine, 1.0, delta=1e-12)
        self.assertEqual(report.n_generated, 12)

    def test_repeated_member(self):
        generated = [self.reference[3]] * 5
        report = evaluate_sets(generated, self.reference,
                               self.street_map.extent, n_proj=50)

        self.assertEqual(report.edr_mean, 0.0)
        self.assertEqual(report.dtw_mean, 0.0)
        self.assertEqual((report.n_generated, report.n_reference), (5, 12))

    def test_min_pair_scores(self):
        other = synth_trajectories(self.street_map, 4, 9)
        edr_min, dtw_min = min_pair_scores(other, self.reference)

        for k, traj in enumerate(other):
            self.assertEqual(edr_min[k],
                             min(edr(traj, r) for r in self.reference))
            self.assertAlmostEqual(dtw_min[k],
                                   min(dtw(traj, r) for r in self.reference))

    def test_empty(self):
        with self.assertRaises(ValidationError):
            evaluate_sets([], self.reference, self.street_map.extent)

    def test_report_json(self):
        report = evaluate_sets(self.reference[:3], self.reference,
                               self.street_map.extent, tau=15.0, n_proj=20,
                               seed=4, threads=2)
        data = json.loads(report.to_json())

        self.assertEqual(set(data), {'edr_mean', 'dtw_mean', 'cosine',
                                     'sliced_wasserstein', 'n_generated',
                                     'n_reference', 'tau', 'n_proj', 'seed'})
        self.assertEqual((data['tau'], data['n_proj'], data['seed']),
                         (15.0, 20, 4))
        self.assertIsInstance(report, SimilarityReport)
