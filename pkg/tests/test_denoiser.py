import numpy as np
import torch

from unittest import TestCase

from trajsynth.denoiser import DenoiserConfig, build_denoiser, \
    denoiser_apply, timestep_embedding
from trajsynth.errors import NumericError, ValidationError


def randomize_output(net, seed=0):
    """Replace the zero output layer with small random weights."""

    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        w = net.out_conv.weight
        w.copy_(0.1 * torch.randn(w.shape, generator=gen, dtype=w.dtype))
    return net


def inputs(batch=None, n=8, seed=0):
    rng = np.random.default_rng(seed)
    lead = () if batch is None else (batch,)
    maps = (rng.uniform(size=lead + (2, n, n)) < 0.3).astype(np.float64)
    l_t = rng.standard_normal(lead + (1, n, n))
    return maps, l_t


class TestDenoiserConfig(TestCase):

    def test_channels(self):
        self.assertEqual(DenoiserConfig().channels, [8, 16])
        self.assertEqual(DenoiserConfig.full().channels, [64, 128, 256, 256])

    def test_groups(self):
        with self.assertRaises(ValidationError):
            DenoiserConfig(width=6, groups=8)
        with self.assertRaises(ValidationError):
            DenoiserConfig(depth=0)


class TestTimestepEmbedding(TestCase):

    def test_shape_and_distinct(self):
        emb = timestep_embedding(torch.tensor([1, 2, 50]), 8)

        self.assertEqual(tuple(emb.shape), (3, 8))
        self.assertFalse(torch.allclose(emb[0], emb[1]))

    def test_odd_dim(self):
        self.assertEqual(tuple(timestep_embedding(torch.tensor([3]), 7).shape),
                         (1, 7))


class TestDenoiserApply(TestCase):

    def test_zero_output_layer(self):
        net = build_denoiser(seed=0)
        maps, l_t = inputs()
        out = denoiser_apply(net, maps, l_t, 5)

        self.assertEqual(tuple(out.shape), (1, 8, 8))
        self.assertTrue(torch.all(out == 0))

    def test_batch_shape(self):
        net = randomize_output(build_denoiser(seed=0))
        maps, l_t = inputs(batch=3, n=16)

        self.assertEqual(tuple(denoiser_apply(net, maps, l_t, 2).shape),
                         (3, 1, 16, 16))

    def test_batch_permutation(self):
        net = randomize_output(build_denoiser(seed=1, dtype=torch.float64))
        maps, l_t = inputs(batch=4)
        t = torch.tensor([1, 5, 9, 13])
        perm = [2, 0, 3, 1]
        out = denoiser_apply(net, maps, l_t, t)
        out_perm = denoiser_apply(net, maps[perm], l_t[perm], t[perm])

        torch.testing.assert_close(out_perm, out[perm])

    def test_shape_mismatch(self):
        net = build_denoiser(seed=0)
        maps, l_t = inputs()

        with self.assertRaises(ValidationError):
            denoiser_apply(net, maps[:1], l_t, 1)
        with self.assertRaises(ValidationError):
            denoiser_apply(net, np.zeros((2, 16, 16)), l_t, 1)

    def test_not_divisible(self):
        net = build_denoiser(seed=0)
        maps, l_t = inputs(n=10)

        with self.assertRaises(ValidationError):
            denoiser_apply(net, maps, l_t, 1)

    def test_non_finite_params(self):
        net = build_denoiser(seed=0)
        with torch.no_grad():
            net.in_conv.weight[0, 0, 0, 0] = float('nan')
        maps, l_t = inputs()

        with self.assertRaises(NumericError):
            denoiser_apply(net, maps, l_t, 1)

    def test_conditioning_is_live(self):
        from trajsynth.diffusion import OptimizerConfig, TrainBatch, \
            make_schedule, train_on_batch

        schedule = make_schedule(10)
        maps, l_0 = inputs(batch=4)
        batch = TrainBatch(torch.from_numpy(maps),
                           torch.from_numpy(np.clip(l_0, -1, 1)),
                           torch.tensor([1, 3, 5, 7]),
                           torch.from_numpy(inputs(batch=4, seed=1)[1]))
        net, _ = train_on_batch(build_denoiser(seed=0), batch, schedule,
                                OptimizerConfig(lr=1e-3), 1)
        other_maps, l_t = inputs(seed=2)
        out_a = denoiser_apply(net, maps[0], l_t, 3)
        out_b = denoiser_apply(net, other_maps, l_t, 3)

        self.assertGreater(float((out_a - out_b).abs().mean()), 0.0)


class TestBuildDenoiser(TestCase):

    def test_seeded(self):
        a = build_denoiser(seed=3).state_dict()
        b = build_denoiser(seed=3).state_dict()
        c = build_denoiser(seed=4).state_dict()

        for name in a:
            self.assertTrue(torch.equal(a[name], b[name]))
        self.assertFalse(torch.equal(a['in_conv.weight'],
                                     c['in_conv.weight']))

    def test_global_rng_untouched(self):
        torch.manual_seed(123)
        expected = torch.rand(3)
        torch.manual_seed(123)
        build_denoiser(seed=0)

        self.assertTrue(torch.equal(torch.rand(3), expected))

    def test_dtype(self):
        net = build_denoiser(dtype=torch.float64)

        self.assertEqual(net.in_conv.weight.dtype, torch.float64)
