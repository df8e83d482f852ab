import math

import networkx as nx
import numpy as np

from unittest import TestCase
from unittest.mock import patch

from trajsynth.errors import GenerationError, UnreachableError, \
    ValidationError
from trajsynth.geodata import Extent, synth_map
from trajsynth.metrics import heatmap_from
from trajsynth.mobility import DIFFUSION, GM, M_GM, M_RWP, RWP, \
    MobilityConfig, bfs_path, fold_into, gen_gm, gen_m_gm, gen_m_rwp, \
    gen_rwp, generate_batch, generate_one, gm_process
from trajsynth.raster import RasterGrid, point_to_cell, rasterize_map, \
    street_mask

EXTENT = Extent(0, 0, 640, 10)


def mask_of(data, cell_size=10):
    data = np.asarray(data, dtype=np.float64)
    return RasterGrid(Extent(0, 0, data.shape[0] * cell_size, cell_size),
                      data)


def grid_mask():
    return street_mask(rasterize_map(synth_map(0, EXTENT, 160, 4)))


def assert_on_street(test, traj, mask):
    street = mask.data[0]
    for x, y in traj.points:
        cell = point_to_cell(mask.extent, x, y)
        test.assertEqual(street[cell], 1.0)
        test.assertEqual((x, y), mask.extent.cell_center(*cell))


class TestMobilityConfig(TestCase):

    def test_defaults(self):
        cfg = MobilityConfig()

        self.assertEqual(cfg.model, RWP)
        self.assertEqual(cfg.horizon_steps, 64)

    def test_invalid(self):
        for kwargs in ({'model': 'walk'}, {'speed_min': 3.0},
                       {'speed_min': -1.0}, {'gm_alpha': 1.5},
                       {'step_seconds': 0}, {'horizon_steps': 0}):
            with self.assertRaises(ValidationError):
                MobilityConfig(**kwargs)

    def test_wrong_model(self):
        with self.assertRaises(ValidationError):
            gen_gm(MobilityConfig(model=RWP), EXTENT, 0)


class TestRandomWaypoint(TestCase):

    def test_zero_speed(self):
        cfg = MobilityConfig(speed_min=0, speed_max=0, horizon_steps=20)
        traj = gen_rwp(cfg, EXTENT, 3)

        self.assertEqual(len(traj), 20)
        self.assertTrue(np.all(traj.points == traj.points[0]))

    def test_single_step(self):
        self.assertEqual(len(gen_rwp(MobilityConfig(horizon_steps=1),
                                     EXTENT, 0)), 1)

    def test_displacement_bound(self):
        cfg = MobilityConfig(horizon_steps=200)
        bound = cfg.speed_max * cfg.step_seconds + 0.015
        for seed in range(20):
            traj = gen_rwp(cfg, EXTENT, seed)
            steps = np.linalg.norm(np.diff(traj.points, axis=0), axis=1)

            self.assertTrue(np.all(steps <= bound))
            self.assertTrue(traj.within(EXTENT))

    def test_deterministic(self):
        cfg = MobilityConfig()

        self.assertEqual(gen_rwp(cfg, EXTENT, 5), gen_rwp(cfg, EXTENT, 5))
        self.assertNotEqual(gen_rwp(cfg, EXTENT, 5), gen_rwp(cfg, EXTENT, 6))


class TestGaussMarkov(TestCase):

    def test_full_memory(self):
        cfg = MobilityConfig(model=GM, gm_alpha=1.0, gm_sigma=5.0,
                             gm_heading_sigma=2.0)
        speeds, headings = gm_process(cfg, np.random.default_rng(0), 50)

        self.assertTrue(np.all(speeds == speeds[0]))
        self.assertTrue(np.all(headings == headings[0]))

    def test_no_memory_variance(self):
        cfg = MobilityConfig(model=GM, gm_alpha=0.0, gm_mean_speed=1.0,
                             gm_sigma=0.3)
        speeds, _ = gm_process(cfg, np.random.default_rng(1), 100000)

        self.assertAlmostEqual(np.var(speeds[1:]) / 0.09, 1.0, delta=0.1)
        self.assertAlmostEqual(np.mean(speeds[1:]), 1.0, delta=0.01)

    def test_stationary_variance(self):
        cfg = MobilityConfig(model=GM, gm_alpha=0.9, gm_sigma=0.3)
        speeds, _ = gm_process(cfg, np.random.default_rng(2), 200000)

        self.assertAlmostEqual(np.var(speeds) / 0.09, 1.0, delta=0.1)

    def test_within_extent(self):
        cfg = MobilityConfig(model=GM, gm_mean_speed=30.0,
                             horizon_steps=300)
        for seed in range(10):
            traj = gen_gm(cfg, EXTENT, seed)

            self.assertEqual(len(traj), 300)
            self.assertTrue(traj.within(EXTENT))

    def test_fold(self):
        result = fold_into(np.array([-5.0, 5.0, 105.0, 210.0]), 0.0, 100.0)

        np.testing.assert_allclose(result, [5.0, 5.0, 95.0, 10.0])


class TestBfsPath(TestCase):

    def test_start_is_goal(self):
        mask = mask_of(np.ones((8, 8)))

        self.assertEqual(bfs_path(mask, (2, 3), (2, 3)).cells, ((2, 3),))

    def test_corridor(self):
        data = np.zeros((8, 8))
        data[4, 0:7] = 1
        path = bfs_path(mask_of(data), (4, 0), (4, 6))

        self.assertEqual(len(path), 7)

    def test_four_neighbors(self):
        path = bfs_path(mask_of(np.ones((8, 8))), (0, 0), (5, 7))

        self.assertEqual(len(path), 13)
        for (r0, c0), (r1, c1) in zip(path.cells[:-1], path.cells[1:]):
            self.assertEqual(abs(r1 - r0) + abs(c1 - c0), 1)

    def test_deterministic_ties(self):
        mask = mask_of(np.ones((8, 8)))

        self.assertEqual(bfs_path(mask, (0, 0), (3, 3)),
                         bfs_path(mask, (0, 0), (3, 3)))

    def test_unreachable(self):
        data = np.zeros((8, 8))
        data[0, 0] = data[7, 7] = 1

        with self.assertRaises(UnreachableError):
            bfs_path(mask_of(data), (0, 0), (7, 7))

    def test_not_street(self):
        with self.assertRaises(ValidationError):
            bfs_path(mask_of(np.zeros((8, 8))), (0, 0), (1, 1))

    def test_dijkstra_oracle(self):
        rng = np.random.default_rng(11)
        trials = 0
        while trials < 100:
            data = (rng.uniform(size=(12, 12)) < 0.65).astype(np.float64)
            graph = nx.grid_2d_graph(12, 12)
            graph.remove_nodes_from([n for n in list(graph)
                                     if not data[n]])
            nodes = sorted(graph)
            if len(nodes) < 2:
                continue
            a, b = rng.choice(len(nodes), size=2)
            start, goal = nodes[a], nodes[b]
            if not nx.has_path(graph, start, goal):
                continue
            expected = nx.dijkstra_path_length(graph, start, goal)
            path = bfs_path(mask_of(data), start, goal)

            self.assertEqual(len(path) - 1, expected)
            trials += 1


class TestMapRestricted(TestCase):

    def setUp(self):
        self.mask = grid_mask()

    def test_m_rwp_on_street(self):
        cfg = MobilityConfig(model=M_RWP, horizon_steps=100,
                             step_seconds=5.0)
        for seed in range(30):
            assert_on_street(self, gen_m_rwp(cfg, self.mask, seed),
                             self.mask)

    def test_m_rwp_single_cell(self):
        data = np.zeros((8, 8))
        data[3, 5] = 1
        traj = gen_m_rwp(MobilityConfig(model=M_RWP, horizon_steps=10),
                         mask_of(data), 0)

        self.assertEqual(traj.points.tolist(), [[55.0, 35.0]] * 10)

    def test_m_rwp_heatmap_support(self):
        cfg = MobilityConfig(model=M_RWP, step_seconds=10.0)
        trajs = [gen_m_rwp(cfg, self.mask, seed) for seed in range(50)]
        heat = heatmap_from(trajs, EXTENT)

        self.assertFalse(np.any((heat.data > 0) & (self.mask.data[0] == 0)))

    def test_m_rwp_moves(self):
        cfg = MobilityConfig(model=M_RWP, step_seconds=10.0)
        traj = gen_m_rwp(cfg, self.mask, 1)

        self.assertGreater(len({tuple(p) for p in traj.points}), 1)

    def test_m_gm_on_street(self):
        cfg = MobilityConfig(model=M_GM, horizon_steps=100,
                             step_seconds=5.0)
        for seed in range(30):
            assert_on_street(self, gen_m_gm(cfg, self.mask, seed),
                             self.mask)

    def test_m_gm_corridor(self):
        data = np.zeros((8, 8))
        data[2, :] = 1
        cfg = MobilityConfig(model=M_GM, horizon_steps=200,
                             step_seconds=10.0)
        for seed in range(10):
            traj = gen_m_gm(cfg, mask_of(data), seed)

            self.assertTrue(np.all(traj.points[:, 1] == 25.0))

    def test_m_gm_turns_less_than_m_rwp(self):
        def mean_turn(trajs):
            turns = []
            for traj in trajs:
                steps = np.diff(traj.points, axis=0)
                steps = steps[np.any(steps != 0, axis=1)]
                angles = np.arctan2(steps[:, 1], steps[:, 0])
                turn = np.abs(np.diff(angles))
                turns.extend(np.minimum(turn, 2 * math.pi - turn))
            return np.mean(turns)

        gm = MobilityConfig(model=M_GM, horizon_steps=200)
        rwp = MobilityConfig(model=M_RWP, horizon_steps=200)

        self.assertLess(
            mean_turn(gen_m_gm(gm, self.mask, s) for s in range(100)),
            mean_turn(gen_m_rwp(rwp, self.mask, s) for s in range(100)))

    def test_m_gm_diagonal_street(self):
        cfg = MobilityConfig(model=M_GM, horizon_steps=100,
                             step_seconds=10.0)
        traj = gen_m_gm(cfg, mask_of(np.eye(8)), 2)

        self.assertGreater(len({tuple(p) for p in traj.points}), 1)
        self.assertTrue(np.all(traj.points[:, 0] == traj.points[:, 1]))

    def test_empty_mask(self):
        empty = mask_of(np.zeros((8, 8)))

        with self.assertRaises(ValidationError):
            gen_m_rwp(MobilityConfig(model=M_RWP), empty, 0)
        with self.assertRaises(ValidationError):
            gen_m_gm(MobilityConfig(model=M_GM), empty, 0)

    def test_deterministic(self):
        cfg = MobilityConfig(model=M_GM)

        self.assertEqual(gen_m_gm(cfg, self.mask, 4),
                         gen_m_gm(cfg, self.mask, 4))


class TestGenerateBatch(TestCase):

    def setUp(self):
        self.street_map = synth_map(0, EXTENT, 160, 4)

    def test_every_model(self):
        for model in (RWP, GM, M_RWP, M_GM):
            trajs = generate_batch(MobilityConfig(model=model),
                                   self.street_map, 5, 0)

            self.assertEqual(len(trajs), 5)
            self.assertEqual(trajs[0].traj_id, '%s0' % model)
            self.assertTrue(all(len(t) == 64 for t in trajs))

    def test_threads_do_not_matter(self):
        cfg = MobilityConfig(model=M_GM)

        self.assertEqual(generate_batch(cfg, self.street_map, 8, 3, 1),
                         generate_batch(cfg, self.street_map, 8, 3, 4))

    def test_matches_generate_one(self):
        from trajsynth.geodata import child_seed

        cfg = MobilityConfig(model=RWP)
        batch = generate_batch(cfg, self.street_map, 3, 9)

        self.assertEqual(batch[2], generate_one(cfg, child_seed(9, 2),
                                                EXTENT))

    def test_count(self):
        with self.assertRaises(ValidationError):
            generate_batch(MobilityConfig(), self.street_map, 0, 0)

    def test_diffusion_needs_model(self):
        with self.assertRaises(ValidationError):
            generate_batch(MobilityConfig(model=DIFFUSION), self.street_map,
                           1, 0)

    def test_diffusion_source(self):
        from trajsynth.denoiser import build_denoiser
        from trajsynth.diffusion import make_schedule

        street_map = synth_map(0, Extent(0, 0, 80, 10), 40, 0)
        model = (build_denoiser(seed=0), make_schedule(5))
        cfg = MobilityConfig(model=DIFFUSION, horizon_steps=12)
        trajs = generate_batch(cfg, street_map, 2, 0, model=model)

        self.assertEqual([len(t) for t in trajs], [12, 12])
        self.assertEqual(trajs[1].traj_id, 'diffusion1')
        self.assertTrue(all(t.within(street_map.extent) for t in trajs))

    @patch('trajsynth.diffusion.generate')
    def test_diffusion_blank_sample(self, generate):
        extent = self.street_map.extent
        generate.return_value = [RasterGrid(extent, np.zeros((64, 64)))]
        cfg = MobilityConfig(model=DIFFUSION, horizon_steps=64)

        with self.assertRaises(GenerationError):
            generate_batch(cfg, self.street_map, 1, 0, model=(None, None))

    @patch('trajsynth.diffusion.generate')
    def test_diffusion_flat_sample(self, generate):
        extent = self.street_map.extent
        generate.return_value = [RasterGrid(extent,
                                            np.full((64, 64), 0.3))]
        cfg = MobilityConfig(model=DIFFUSION)

        with self.assertRaises(GenerationError):
            generate_batch(cfg, self.street_map, 1, 0, model=(None, None))

    @patch('trajsynth.diffusion.generate')
    def test_diffusion_dim_sample(self, generate):
        data = np.zeros((64, 64))
        data[16, 10:20] = 0.3
        generate.return_value = [RasterGrid(self.street_map.extent, data)]
        cfg = MobilityConfig(model=DIFFUSION, horizon_steps=10)
        traj = generate_batch(cfg, self.street_map, 1, 0,
                              model=(None, None))[0]

        self.assertTrue(np.all(traj.points[:, 1] == 165.0))
