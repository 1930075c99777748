"""Cross/self merge, edge detection, and edge-aware selection."""

from __future__ import annotations

import numpy as np
import pytest

from posestar.errors import EmptyRegionError, ParamError
from posestar.refinement import (
    FusedRegion,
    canny_edges,
    combine_regions,
    cross_self_merge,
    edge_select,
    region_support,
    upsample_fine,
)
from posestar.rasterops import bilinear_upsample
from posestar.tensorio import ImageBuffer


def gray_image(arr):
    arr = np.asarray(arr, dtype=np.uint8)
    return ImageBuffer(width=arr.shape[1], height=arr.shape[0], channels=1, data=arr)


class TestUpsample:
    def test_constant_stays_constant(self):
        out = upsample_fine(np.full((16, 16), 0.6))
        assert out.shape == (32, 32)
        assert np.allclose(out, 0.6)

    def test_zero_stays_zero(self):
        assert not upsample_fine(np.zeros((16, 16))).any()

    def test_matches_reference_bilinear(self):
        rng = np.random.default_rng(0)
        src = rng.random((16, 16))
        fast = upsample_fine(src)

        def reference(src, oh, ow):
            ih, iw = src.shape
            out = np.zeros((oh, ow))
            for i in range(oh):
                for j in range(ow):
                    sy = (i + 0.5) * ih / oh - 0.5
                    sx = (j + 0.5) * iw / ow - 0.5
                    y0 = min(max(int(np.floor(sy)), 0), ih - 1)
                    x0 = min(max(int(np.floor(sx)), 0), iw - 1)
                    y1 = min(y0 + 1, ih - 1)
                    x1 = min(x0 + 1, iw - 1)
                    fy = min(max(sy - y0, 0.0), 1.0)
                    fx = min(max(sx - x0, 0.0), 1.0)
                    out[i, j] = (src[y0, x0] * (1 - fy) * (1 - fx) + src[y0, x1] * (1 - fy) * fx
                                 + src[y1, x0] * fy * (1 - fx) + src[y1, x1] * fy * fx)
            return out

        slow = reference(src, 32, 32)
        assert np.allclose(fast, slow, rtol=1e-12)

    def test_hot_cell_mass_scales_with_area(self):
        src = np.zeros((16, 16))
        src[8, 8] = 1.0
        out = upsample_fine(src)
        assert out.sum() == pytest.approx(4.0 * src.sum(), rel=0.05)
        assert out.max() <= 1.0


class TestMerge:
    def test_zero_cross_kills_self(self):
        out = cross_self_merge(np.zeros((32, 32)), np.full((32, 32), 0.9), 0.4)
        assert not out.values.any()

    def test_average_of_equals(self):
        cross = np.zeros((32, 32))
        cross[10:20, 10:20] = 0.9
        selfm = np.zeros((32, 32))
        selfm[10:20, 10:20] = 0.9
        out = cross_self_merge(cross, selfm, 0.4)
        assert (out.values[10:20, 10:20] == pytest.approx(0.9))

    def test_threshold_cut(self):
        cross = np.array([[0.9, 0.5]])
        selfm = np.array([[0.1, 0.1]])
        out = cross_self_merge(cross, selfm, 0.4)
        assert out.values[0, 0] == pytest.approx(0.5)  # (0.9+0.1)/2 kept
        assert out.values[0, 1] == 0.0  # (0.5+0.1)/2 dropped

    def test_support_containment(self):
        rng = np.random.default_rng(1)
        cross = np.where(rng.random((32, 32)) > 0.5, rng.random((32, 32)), 0.0)
        selfm = rng.random((32, 32))
        out = cross_self_merge(cross, selfm, 0.4)
        assert ((out.values > 0) <= (cross > 0)).all()
        assert (out.values[out.values > 0] > 0.4).all()

    def test_alpha_monotonicity(self):
        rng = np.random.default_rng(2)
        cross = rng.random((32, 32))
        selfm = rng.random((32, 32))
        lo = cross_self_merge(cross, selfm, 0.35)
        hi = cross_self_merge(cross, selfm, 0.55)
        assert ((hi.values > 0) <= (lo.values > 0)).all()

    def test_bad_alpha(self):
        with pytest.raises(ParamError):
            cross_self_merge(np.zeros((2, 2)), np.zeros((2, 2)), 1.5)


class TestCombine:
    def make(self, k, vals):
        return FusedRegion(values=np.asarray(vals, dtype=np.float64), index=k)

    def test_identical_regions(self):
        r = np.random.default_rng(3).random((4, 4))
        out = combine_regions([self.make(i, r) for i in range(8)], "max")
        assert (out == r).all()

    def test_single_nonzero_region(self):
        zero = np.zeros((4, 4))
        hot = zero.copy()
        hot[1, 1] = 0.9
        regions = [self.make(0, hot)] + [self.make(i, zero) for i in range(1, 8)]
        assert (combine_regions(regions, "max") == hot).all()

    def test_disjoint_union_under_max(self):
        a = np.zeros((4, 4))
        a[0, 0] = 0.5
        b = np.zeros((4, 4))
        b[3, 3] = 0.7
        out = combine_regions([self.make(0, a), self.make(1, b)], "max")
        assert out[0, 0] == 0.5 and out[3, 3] == 0.7

    def test_max_commutative_and_idempotent(self):
        rng = np.random.default_rng(4)
        regions = [self.make(i, rng.random((4, 4))) for i in range(4)]
        out1 = combine_regions(regions, "max")
        out2 = combine_regions(list(reversed(regions)), "max")
        assert (out1 == out2).all()
        assert (combine_regions([self.make(0, out1)], "max") == out1).all()


class TestCanny:
    def test_constant_image_no_edges(self):
        img = gray_image(np.full((64, 64), 128))
        assert not canny_edges(img).any()

    def test_step_edge_single_thin_line(self):
        arr = np.zeros((64, 64), dtype=np.uint8)
        arr[:, 32:] = 255
        edges = canny_edges(gray_image(arr))
        interior = edges[8:-8]
        # one edge pixel per interior row, at the step
        assert (interior.sum(axis=1) == 1).all()
        cols = np.nonzero(interior)[1]
        assert (np.abs(cols - 31.5) <= 1.5).all()

    def test_edges_thin_no_2x2_block(self):
        arr = np.zeros((64, 64), dtype=np.uint8)
        arr[:, 32:] = 255
        e = canny_edges(gray_image(arr)).astype(int)
        blocks = e[:-1, :-1] + e[1:, :-1] + e[:-1, 1:] + e[1:, 1:]
        assert blocks.max() <= 2

    def test_closed_square_outline(self):
        arr = np.full((64, 64), 30, dtype=np.uint8)
        arr[16:48, 16:48] = 220
        edges = canny_edges(gray_image(arr))
        assert edges.sum() > 100  # all four sides present


class TestEdgeSelect:
    def region_rect(self):
        region = np.zeros((32, 32))
        region[8:24, 4:28] = 0.9  # upsamples to a fat rectangle
        return region

    def test_empty_edges_stay_empty(self):
        out = edge_select(np.zeros((512, 512), dtype=bool), self.region_rect(), 0.25, (512, 512))
        assert not out.any()

    def test_on_boundary_edge_retained(self):
        region = self.region_rect()
        support = region_support(region, (512, 512))
        from scipy import ndimage

        inner = ndimage.binary_erosion(support)
        boundary = support & ~inner
        out = edge_select(boundary, region, 0.05, (512, 512))
        assert (out == boundary).all()

    def test_offset_outline_retained_iff_within_band(self):
        # support ~ rows 128..384, cols 64..448 -> inscribed radius ~128
        region = self.region_rect()
        support = region_support(region, (512, 512))
        rows = np.nonzero(support.any(axis=1))[0]
        top = rows.min()
        mu = 0.25  # band = 0.25 * inscribed radius, beyond the 2-cell floor
        from scipy import ndimage

        inscribed = float(ndimage.distance_transform_edt(support).max())
        band = mu * inscribed
        near = np.zeros((512, 512), dtype=bool)
        near[top - int(band) + 2, 200:300] = True  # inside the band
        far = np.zeros((512, 512), dtype=bool)
        far[max(0, top - int(band) - 20), 200:300] = True  # beyond it
        assert edge_select(near, region, mu, (512, 512)).any()
        assert not edge_select(far, region, mu, (512, 512)).any()

    def test_interior_edges_kept(self):
        region = self.region_rect()
        support = region_support(region, (512, 512))
        mid = np.zeros((512, 512), dtype=bool)
        mid[256, 200:300] = True
        assert support[256, 250]
        out = edge_select(mid, region, 0.1, (512, 512))
        assert out.any()

    def test_mu_monotonicity(self):
        rng = np.random.default_rng(5)
        edges = rng.random((512, 512)) > 0.995
        region = self.region_rect()
        small = edge_select(edges, region, 0.05, (512, 512))
        big = edge_select(edges, region, 0.6, (512, 512))
        assert (small <= big).all()
        assert (small <= edges).all()

    def test_empty_region_raises(self):
        with pytest.raises(EmptyRegionError):
            edge_select(np.zeros((512, 512), dtype=bool), np.zeros((32, 32)), 0.1, (512, 512))

    def test_literal_center_variant(self):
        region = self.region_rect()
        center_edge = np.zeros((512, 512), dtype=bool)
        center_edge[256, 256] = True
        rim_edge = np.zeros((512, 512), dtype=bool)
        rim_edge[130, 70] = True
        assert edge_select(center_edge, region, 0.5, (512, 512), literal_center=True).any()
        assert not edge_select(rim_edge, region, 0.2, (512, 512), literal_center=True).any()
