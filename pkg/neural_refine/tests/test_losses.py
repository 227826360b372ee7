"""Unit examples and invariances of the four training objectives."""

import numpy as np
import pytest
import torch

from neural_refine import losses


def rand_scene(seed=0, b=2, h=12, w=16):
    g = torch.Generator().manual_seed(seed)
    depth = torch.rand(b, 1, h, w, generator=g)
    normal = torch.randn(b, 3, h, w, generator=g)
    normal = normal / normal.norm(dim=1, keepdim=True)
    mask = (torch.rand(b, 1, h, w, generator=g) < 0.7).float()
    return depth, normal, mask


class TestUnitExamples:
    def test_perfect_prediction_zeroes_masked_terms(self):
        depth, normal, mask = rand_scene()
        assert float(losses.depth_loss(depth, depth, mask)) == 0.0
        # the cross product kernel leaves an fma residue around 1e-8
        assert float(losses.normal_loss(normal, normal, mask)) < 1e-7
        assert float(losses.gradient_loss(depth, depth, mask)) < 1e-7

    def test_saturated_mask_prediction_vanishes(self):
        _, _, mask = rand_scene()
        # confident correct probabilities drive the focal term toward zero
        loose = losses.mask_loss(torch.clamp(mask, 0.2, 0.8), mask)
        tight = losses.mask_loss(torch.clamp(mask, 1e-4, 1.0 - 1e-4), mask)
        assert float(tight) < 1e-6 < float(loose)

    def test_rotated_normals_cost_one(self):
        b, h, w = 1, 4, 4
        truth = torch.zeros(b, 3, h, w)
        truth[:, 2] = 1.0
        pred = torch.zeros(b, 3, h, w)
        pred[:, 0] = 1.0
        mask = torch.ones(b, 1, h, w)
        assert float(losses.normal_loss(pred, truth, mask)) == pytest.approx(
            1.0, abs=1e-6)

    def test_uniform_depth_error_squares(self):
        truth = torch.tensor([[0.2, 0.4], [0.6, 0.8]]).reshape(1, 1, 2, 2)
        pred = truth + 0.1
        mask = torch.ones(1, 1, 2, 2)
        assert float(losses.depth_loss(pred, truth, mask)) == pytest.approx(
            0.01, abs=1e-8)

    def test_focal_hand_value(self):
        # one hit pixel predicted at 0.5: -alpha * (1-p)^gamma * log(p)
        pred = torch.full((1, 1, 1, 1), 0.5)
        truth = torch.ones(1, 1, 1, 1)
        expect = -0.5 * 0.25 * np.log(0.5)
        assert float(losses.mask_loss(pred, truth)) == pytest.approx(expect)
        # one miss pixel predicted at 0.5 costs the same with alpha = 0.5
        assert float(losses.mask_loss(pred, 1.0 - truth)) == pytest.approx(expect)


class TestMaskingAndGuards:
    def test_errors_outside_mask_are_free(self):
        depth, normal, mask = rand_scene(seed=1)
        wrong_d = torch.where(mask > 0.5, depth, depth + 5.0)
        wrong_n = torch.where(mask > 0.5, normal, torch.roll(normal, 1, dims=1))
        assert float(losses.depth_loss(wrong_d, depth, mask)) == 0.0
        assert float(losses.normal_loss(wrong_n, normal, mask)) < 1e-7

    def test_empty_mask_gives_zero(self):
        depth, normal, _ = rand_scene(seed=2)
        zero = torch.zeros_like(depth)
        assert float(losses.depth_loss(depth, depth + 1, zero)) == 0.0
        assert float(losses.normal_loss(normal, -normal, zero)) == 0.0
        assert float(losses.gradient_loss(depth, depth + 1, zero)) == 0.0

    def test_zero_normals_do_not_blow_up(self):
        depth, normal, mask = rand_scene(seed=3)
        out = losses.normal_loss(torch.zeros_like(normal), normal, mask)
        assert torch.isfinite(out)


class TestInvariances:
    def test_normal_term_scale_invariant(self):
        depth, normal, mask = rand_scene(seed=4)
        g = torch.Generator().manual_seed(5)
        pred = torch.randn(*normal.shape, generator=g)
        base = losses.normal_loss(pred, normal, mask)
        for scale in (0.25, 3.0, 117.0):
            assert float(losses.normal_loss(pred * scale, normal, mask)) \
                == pytest.approx(float(base), rel=1e-5)
            assert float(losses.normal_loss(pred, normal * scale, mask)) \
                == pytest.approx(float(base), rel=1e-5)

    def test_direction_mismatch_scale_invariant(self):
        # the sine underlying both direction terms is homogeneous of degree
        # zero in each vector-field argument
        g = torch.Generator().manual_seed(6)
        a = torch.randn(2, 3, 9, 11, generator=g)
        b = torch.randn(2, 3, 9, 11, generator=g)
        base = losses.direction_mismatch(a, b)
        assert float(base.mean()) > 0.1
        for scale in (0.25, 3.0, 117.0):
            assert torch.allclose(losses.direction_mismatch(a * scale, b),
                                  base, rtol=1e-5, atol=1e-7)
            assert torch.allclose(losses.direction_mismatch(a, b * scale),
                                  base, rtol=1e-5, atol=1e-7)

    def test_gradient_term_sees_shape_not_offset(self):
        depth, _, mask = rand_scene(seed=8)
        # a constant shift leaves every finite difference unchanged
        assert float(losses.gradient_loss(depth + 0.3, depth, mask)) \
            == pytest.approx(0.0, abs=1e-6)

    def test_gradient_term_hand_value_for_unit_tilt(self):
        # truth flat, prediction rising one normalized depth unit per pixel:
        # implied orientations (0, 0, 1) vs (-1, 0, 1), whose sine is
        # 1/sqrt(2)
        i = torch.arange(8.0).reshape(1, 1, 8, 1)
        pred = i.expand(1, 1, 8, 6).contiguous()
        truth = torch.zeros(1, 1, 8, 6)
        mask = torch.ones(1, 1, 8, 6)
        assert float(losses.gradient_loss(pred, truth, mask)) \
            == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-6)


class TestTotal:
    def test_weighted_sum(self):
        depth, normal, mask = rand_scene(seed=9)
        g = torch.Generator().manual_seed(10)
        pd = torch.rand(*depth.shape, generator=g)
        pn = torch.randn(*normal.shape, generator=g)
        pm = torch.rand(*mask.shape, generator=g)
        total, terms = losses.total_loss(pd, pn, pm, depth, normal, mask)
        expect = (losses.DEPTH_WEIGHT * terms["depth"]
                  + losses.NORMAL_WEIGHT * terms["normal"]
                  + losses.MASK_WEIGHT * terms["mask"]
                  + losses.GRADIENT_WEIGHT * terms["gradient"])
        assert float(total) == pytest.approx(float(expect), rel=1e-12)
        assert all(w > 0 for w in (losses.DEPTH_WEIGHT, losses.NORMAL_WEIGHT,
                                   losses.MASK_WEIGHT, losses.GRADIENT_WEIGHT))
