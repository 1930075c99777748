"""Threshold-gated averaging and window consensus, checked against naive
reference evaluations."""

from __future__ import annotations

import numpy as np
import pytest

from posestar.aggregation import (
    CoarseTargetStack,
    PhaseWeights,
    build_coarse_stack,
    collapse_to_fine,
    phase_weights,
    sliding_window_consensus,
    thresholded_average,
)
from posestar.errors import ParamError, ShapeError


def naive_thresholded_average(maps, beta):
    """Pixel-by-pixel reference evaluation."""
    n, h, w = maps.shape
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            total = 0.0
            count = 0
            for k in range(n):
                v = maps[k, i, j]
                if v > beta:
                    total = total + v
                    count += 1
            out[i, j] = total / count if count else 0.0
    return out


class TestThresholdedAverage:
    def test_single_pixel_example(self):
        maps = np.zeros((3, 1, 1))
        maps[:, 0, 0] = [0.5, 0.2, 0.4]
        out = thresholded_average(maps, 0.3)
        assert out[0, 0] == pytest.approx((0.5 + 0.4) / 2)

    def test_all_below_threshold_gives_zero(self):
        maps = np.full((3, 2, 2), 0.1)
        assert not thresholded_average(maps, 0.3).any()

    def test_single_token_identity(self):
        maps = np.full((1, 2, 2), 0.9)
        assert (thresholded_average(maps, 0.3) == 0.9).all()

    def test_matches_naive_oracle_bit_exact(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(1, 9))
            maps = rng.random((n, 16, 16))
            beta = float(rng.uniform(0.1, 0.9))
            fast = thresholded_average(maps, beta)
            slow = naive_thresholded_average(maps, beta)
            assert (fast == slow).all()

    def test_bounds_and_support_monotonicity(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            maps = rng.random((5, 16, 16))
            lo = thresholded_average(maps, 0.3)
            hi = thresholded_average(maps, 0.5)
            assert (lo <= maps.max(axis=0) + 1e-15).all()
            assert (lo[lo > 0] >= 0.3).all()
            assert ((hi > 0) <= (lo > 0)).all()

    def test_bad_beta(self):
        with pytest.raises(ParamError):
            thresholded_average(np.ones((1, 2, 2)), 0.0)


class TestBuildCoarse:
    def test_one_hot_token_passes_through(self):
        stack = np.zeros((4, 3, 16, 16))
        stack[:, 1] = 1.0
        coarse = build_coarse_stack(stack, 0.3)
        assert (coarse.data == 1.0).all()

    def test_all_zero_stays_zero(self):
        coarse = build_coarse_stack(np.zeros((4, 2, 16, 16)), 0.3)
        assert not coarse.data.any()


class TestPhaseWeights:
    def test_ratio_of_extremes(self):
        w = phase_weights(100)
        assert w.w[-1] / w.w[0] == pytest.approx(100.0)

    def test_normalized(self):
        assert phase_weights(100).w.sum() == pytest.approx(1.0, abs=1e-9)

    def test_single_step(self):
        assert phase_weights(1).w.tolist() == [1.0]

    def test_strictly_increasing_required(self):
        with pytest.raises(ParamError):
            PhaseWeights(np.array([1.0, 1.0, 2.0]))

    def test_scaling_gives_identical_weights(self):
        raw = np.arange(1.0, 101.0)
        assert (PhaseWeights(raw).w == PhaseWeights(raw * 5.0).w).all()


def naive_consensus(coarse, w, window):
    """Direct evaluation of the windowed weighted average."""
    steps = coarse.shape[0]
    g = int(round(steps ** 0.5))
    maps = coarse.reshape(g, g, *coarse.shape[1:])
    wg = w.reshape(g, g)
    side = g - window + 1
    out = np.zeros((side, side, *coarse.shape[1:]))
    for i in range(side):
        for j in range(side):
            num = np.zeros(coarse.shape[1:])
            den = 0.0
            for dm in range(window):
                for dn in range(window):
                    num += maps[i + dm, j + dn] * wg[i + dm, j + dn]
                    den += wg[i + dm, j + dn]
            out[i, j] = num / den
    return out


class TestConsensus:
    def test_shape_100_steps_window_3(self):
        coarse = CoarseTargetStack(data=np.random.default_rng(0).random((100, 16, 16)))
        out = sliding_window_consensus(coarse, phase_weights(100), 3)
        assert out.shape == (8, 8, 16, 16)

    def test_constant_input_fixed_point(self):
        c = 0.375  # dyadic, exact under integer weights
        coarse = CoarseTargetStack(data=np.full((9, 4, 4), c))
        w = PhaseWeights(np.arange(1.0, 10.0))
        out = sliding_window_consensus(coarse, w, 3)
        assert (out == c).all()

    def test_constant_input_near_fixed_point_general(self):
        rng = np.random.default_rng(5)
        c = float(rng.random())
        coarse = CoarseTargetStack(data=np.full((100, 8, 8), c))
        out = sliding_window_consensus(coarse, phase_weights(100), 3)
        assert np.allclose(out, c, rtol=1e-12, atol=1e-15)

    def test_weight_scale_invariance_bit_exact(self):
        rng = np.random.default_rng(6)
        coarse = CoarseTargetStack(data=rng.random((100, 16, 16)))
        ramp = np.cumsum(rng.integers(1, 9, size=100)).astype(np.float64)
        a = sliding_window_consensus(coarse, PhaseWeights(ramp), 3)
        b = sliding_window_consensus(coarse, PhaseWeights(ramp * 5.0), 3)
        assert (a == b).all()

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(7)
        coarse = rng.random((25, 4, 4))
        w = phase_weights(25)
        fast = sliding_window_consensus(CoarseTargetStack(data=coarse), w, 2)
        slow = naive_consensus(coarse, w.w, 2)
        assert np.allclose(fast, slow, rtol=1e-12)

    def test_convexity_bounds(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            coarse = rng.random((16, 4, 4))
            w = phase_weights(16)
            out = sliding_window_consensus(CoarseTargetStack(data=coarse), w, 3)
            maps = coarse.reshape(4, 4, 4, 4)
            for i in range(2):
                for j in range(2):
                    block = maps[i: i + 3, j: j + 3]
                    assert (out[i, j] <= block.max(axis=(0, 1)) * (1 + 1e-12) + 1e-15).all()
                    assert (out[i, j] >= block.min(axis=(0, 1)) * (1 - 1e-12) - 1e-15).all()

    def test_non_square_step_count_rejected(self):
        coarse = CoarseTargetStack(data=np.zeros((10, 4, 4)))
        with pytest.raises(ShapeError):
            sliding_window_consensus(coarse, PhaseWeights(np.arange(1.0, 11.0)), 2)


class TestCollapse:
    def test_constant_column(self):
        grid = np.zeros((8, 8, 4, 4))
        grid[:, 3] = 0.75  # dyadic, so the row mean is exact
        fine = collapse_to_fine(grid, "row")
        assert (fine.data[3] == 0.75).all()

    def test_all_zero(self):
        fine = collapse_to_fine(np.zeros((8, 8, 4, 4)))
        assert not fine.data.any()

    def test_seven_plus_one_average(self):
        rng = np.random.default_rng(9)
        a = rng.random((4, 4))
        b = rng.random((4, 4))
        grid = np.zeros((8, 8, 4, 4))
        grid[:, 2] = a
        grid[7, 2] = b
        fine = collapse_to_fine(grid, "row")
        assert np.allclose(fine.data[2], (7 * a + b) / 8, rtol=1e-12)

    def test_col_axis(self):
        grid = np.zeros((8, 8, 2, 2))
        grid[5, :] = 0.25
        fine = collapse_to_fine(grid, "col")
        assert (fine.data[5] == 0.25).all()
