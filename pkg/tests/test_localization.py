"""Calibration, anchoring, and the radial constraint."""

from __future__ import annotations

import math

import numpy as np
import pytest

from posestar.errors import DegenerateMapError, ParamError
from posestar.localization import (
    AnchorTable,
    RegionMap,
    anchor_fleshy,
    attention_centroid,
    calibrate_star,
    choose_radius,
    default_anchor_table,
    grid_cell,
    normalize_map,
    radial_constrain,
    radius_for_point,
    resolve_anchor_point,
    translate_local_mode,
    translate_to,
)
from posestar.tensorio import KeypointSet


def region(values):
    return RegionMap(values=np.asarray(values, dtype=np.float64))


def blob(h=16, w=16, at=(4, 5), value=1.0):
    vals = np.zeros((h, w))
    vals[at] = value
    return region(vals)


class TestNormalize:
    def test_linear_rescale(self):
        out = normalize_map(region([[0.2, 0.4]]))
        assert out.values.tolist() == [[0.5, 1.0]]

    def test_all_zero_flagged_degenerate(self):
        out = normalize_map(region(np.zeros((4, 4))))
        assert out.degenerate
        assert not out.values.any()

    def test_idempotent(self):
        first = normalize_map(region([[0.1, 0.7]]))
        second = normalize_map(first)
        assert (first.values == second.values).all()


class TestCentroid:
    def test_single_pixel(self):
        assert attention_centroid(blob(at=(2, 3))) == (2, 3)

    def test_two_equal_pixels_symmetry(self):
        vals = np.zeros((4, 4))
        vals[0, 0] = vals[0, 2] = 1.0
        assert attention_centroid(region(vals)) == (0, 1)

    def test_uniform_map_center(self):
        out = attention_centroid(region(np.ones((16, 16))))
        assert out == (8, 8)  # 7.5 rounds half-up

    def test_all_zero_raises(self):
        with pytest.raises(DegenerateMapError):
            attention_centroid(region(np.zeros((4, 4))))


class TestCalibrateStar:
    def test_translates_centroid_to_keypoint_cell(self):
        m = blob(at=(2, 3))
        out = calibrate_star(m, keypoint=(9 * 32 + 1, 9 * 32 + 1), image_dims=(512, 512))
        assert out.anchor == (9, 9)
        assert attention_centroid(out) == (9, 9)

    def test_identity_when_already_there(self):
        m = blob(at=(9, 9))
        out = calibrate_star(m, keypoint=(9 * 32 + 1, 9 * 32 + 1), image_dims=(512, 512))
        assert (out.values == m.values).all()

    def test_missing_keypoint_falls_back(self):
        m = blob(at=(2, 3))
        out = calibrate_star(m, keypoint=None, image_dims=(512, 512))
        assert out.fallback
        assert out.anchor == (2, 3)
        assert (out.values == m.values).all()

    def test_mass_preserved_for_interior_shift(self):
        vals = np.zeros((16, 16))
        vals[7:9, 7:9] = 0.5
        m = region(vals)
        out = calibrate_star(m, keypoint=(10 * 32, 10 * 32), image_dims=(512, 512))
        assert out.values.sum() == pytest.approx(m.values.sum())

    def test_local_mode_alignment_for_bilateral_maps(self):
        # two lobes; aligning to the right keypoint must keep the right lobe
        vals = np.zeros((16, 16))
        vals[8, 4] = 1.0
        vals[8, 12] = 1.0
        m = region(vals)
        out = translate_local_mode(m, target=(8, 12), window_radius=3.0)
        assert out.values[8, 12] == 1.0  # right lobe stays put
        assert out.values[8, 4] == 1.0  # left lobe untouched too (no shift)

    def test_local_mode_falls_back_to_global_centroid(self):
        m = blob(at=(2, 2))
        out = translate_local_mode(m, target=(12, 12), window_radius=2.0)
        assert attention_centroid(out) == (12, 12)


class TestAnchorFleshy:
    def test_affine_combination_point(self):
        kps = KeypointSet(
            entries={"LHip": (100.0, 400.0, 0.9), "RHip": (160.0, 400.0, 0.9), "Neck": (130.0, 200.0, 0.9)},
            image_width=512, image_height=512,
        )
        rule = {"MidHip": 0.7, "Neck": 0.3}
        point = resolve_anchor_point(rule, kps)
        assert point == pytest.approx((130.0, 340.0))

    def test_single_keypoint_rule_matches_star_calibration(self):
        kps = KeypointSet(entries={"RWrist": (320.0, 320.0, 0.9)}, image_width=512, image_height=512)
        table = AnchorTable(anchors={"Hand": [{"RWrist": 1.0}]})
        m = blob(at=(2, 3))
        out = anchor_fleshy(m, table, kps, "Hand")
        star = calibrate_star(m, (320.0, 320.0), (512, 512))
        assert len(out) == 1
        assert (out[0].values == star.values).all()

    def test_missing_keypoint_falls_back_to_centroid(self):
        kps = KeypointSet(entries={"LHip": (100.0, 400.0, 0.9)}, image_width=512, image_height=512)
        table = AnchorTable(anchors={"Waist": [{"LHip": 0.5, "RHip": 0.5}]})
        m = blob(at=(2, 3))
        out = anchor_fleshy(m, table, kps, "Waist")
        assert len(out) == 1
        assert out[0].fallback
        assert out[0].anchor == (2, 3)

    def test_per_side_rules_give_one_map_each(self):
        kps = KeypointSet(
            entries={"RShoulder": (96.0, 96.0, 0.9), "RWrist": (64.0, 200.0, 0.9),
                     "LShoulder": (416.0, 96.0, 0.9), "LWrist": (448.0, 200.0, 0.9)},
            image_width=512, image_height=512,
        )
        out = anchor_fleshy(blob(at=(8, 8)), default_anchor_table(), kps, "Arms")
        assert len(out) == 2


class TestRadialConstrain:
    def test_inside_kept_outside_zeroed(self):
        vals = np.ones((16, 16))
        out = radial_constrain(region(vals), center=(8, 8), radius=3.0)
        assert out.values[8, 10] == 1.0  # distance 2
        assert out.values[8, 12] == 0.0  # distance 4

    def test_huge_radius_is_identity(self):
        vals = np.random.default_rng(0).random((16, 16))
        out = radial_constrain(region(vals), center=(8, 8), radius=100.0)
        assert (out.values == vals).all()

    def test_idempotent(self):
        vals = np.random.default_rng(1).random((16, 16))
        once = radial_constrain(region(vals), (8, 8), 4.0)
        twice = radial_constrain(once, (8, 8), 4.0)
        assert (once.values == twice.values).all()

    def test_bad_radius(self):
        with pytest.raises(ParamError):
            radial_constrain(region(np.ones((4, 4))), (1, 1), 0.0)

    def test_support_containment_and_monotonicity(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            vals = rng.random((16, 16))
            center = (int(rng.integers(0, 16)), int(rng.integers(0, 16)))
            r1 = float(rng.uniform(0.5, 6.0))
            r2 = r1 + float(rng.uniform(0.0, 6.0))
            out1 = radial_constrain(region(vals), center, r1)
            out2 = radial_constrain(region(vals), center, r2)
            ii, jj = np.nonzero(out1.values)
            d2 = (ii - center[0]) ** 2 + (jj - center[1]) ** 2
            assert (d2 <= r1 * r1).all()
            assert (out1.values[out1.values > 0] == vals[out1.values > 0]).all()
            assert ((out1.values > 0) <= (out2.values > 0)).all()

    def test_commutes_with_translation(self):
        vals = np.zeros((16, 16))
        vals[6:9, 6:9] = np.random.default_rng(3).random((3, 3))
        m = region(vals)
        shifted_then_cut = radial_constrain(translate_to(m, (9, 9)), (9, 9), 2.0)
        cut_then_shifted = translate_to(radial_constrain(m, attention_centroid(m), 2.0), (9, 9))
        assert np.allclose(shifted_then_cut.values, cut_then_shifted.values)


class TestChooseRadius:
    def make_kps(self):
        # bone lengths in grid units (32 px per cell at 512): 2.0, 2.2, 3.0
        return KeypointSet(
            entries={
                "Neck": (256.0, 256.0, 0.95),
                "RShoulder": (256.0 - 2.0 * 32, 256.0, 0.9),
                "LShoulder": (256.0 + 2.2 * 32, 256.0, 0.9),
                "Nose": (256.0, 256.0 - 3.0 * 32, 0.9),
            },
            image_width=512, image_height=512,
        )

    def test_average_mode(self):
        r = choose_radius("Neck", self.make_kps(), "average")
        assert r == pytest.approx((2.0 + 2.2 + 3.0) / 3, abs=1e-9)

    def test_min_mode(self):
        assert choose_radius("Neck", self.make_kps(), "min") == pytest.approx(2.0)

    def test_max_mode(self):
        assert choose_radius("Neck", self.make_kps(), "max") == pytest.approx(3.0)

    def test_isolated_keypoint_default(self):
        kps = KeypointSet(entries={"Neck": (100.0, 100.0, 0.9)}, image_width=512, image_height=512)
        assert choose_radius("Neck", kps, "average") == 4.0

    def test_radius_for_point_modes(self):
        kps = self.make_kps()
        point = (256.0, 256.0)
        refs = ["RShoulder", "Nose"]
        assert radius_for_point(point, refs, kps, "min") == pytest.approx(2.0)
        assert radius_for_point(point, refs, kps, "max") == pytest.approx(3.0)


def test_grid_cell_floor_scaling():
    assert grid_cell(0, 0, (512, 512), (16, 16)) == (0, 0)
    assert grid_cell(511.9, 511.9, (512, 512), (16, 16)) == (15, 15)
    assert grid_cell(32.0, 64.0, (512, 512), (16, 16)) == (2, 1)


def test_default_anchor_table_valid():
    table = default_anchor_table()
    table.validate()
    assert table.rules_for("Waist")[0] == {"MidHip": 0.7, "Neck": 0.3}
