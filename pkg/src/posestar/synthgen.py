"""Synthetic scenes with known ground truth for pipeline verification.

A scene is a posed stick figure with volumetric ground-truth regions per
body token, a rendered grayscale image whose garment boundary has real
contrast (so the edge detector fires), and exact masks for a set of
instructions. Attention stacks are synthesized on top of a scene following
the three-phase evolution observed in diffusion attention: early steps
over-scattered and off-target, middle steps tight on the target, late steps
randomly under- or over-shooting.

All randomness comes from numpy's PCG64 generator seeded explicitly, so a
(pose, seed) pair reproduces byte-identical fixtures on any platform.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ParamError
from .instruction import instruction_to_group
from .localization import (
    STAR_KEYPOINTS,
    choose_radius,
    default_anchor_table,
    radius_for_point,
    resolve_anchor_point,
)
from .rasterops import shift_2d
from .tensorio import (
    AttentionStack,
    ImageBuffer,
    KeypointSet,
    SelfAttentionStack,
    write_attention_stack,
    write_image,
    write_keypoints,
    write_mask_png,
    write_self_attention_stack,
)

POSE_PRESETS = ("standing", "seated", "articulated")

DEFAULT_INSTRUCTIONS = (
    "belly-length blouse",
    "hip-length blouse",
    "knee-length skirt",
    "ankle-length dress",
)

BACKGROUND_TONE = 40
BODY_TONE = 120
GARMENT_TONE = 205

CROSS_GRID = 16
SELF_GRID = 32

# Shape parameters in fractions of the image side.
_NECK_R = 0.044
_SHOULDER_R = 0.052
_ELBOW_R = 0.045
_WRIST_R = 0.037
_HIP_R = 0.060
_KNEE_R = 0.047
_ANKLE_R = 0.040
_ARM_R = 0.036
_THIGH_R = 0.056
_SHANK_R = 0.044
_TORSO_HALF_W = 0.135
_CHEST = (0.140, 0.075)
_WAIST = (0.135, 0.062)
_BELLY = (0.138, 0.062)
_PELVIS = (0.145, 0.068)


@dataclass
class PhaseProfile:
    """Fractions and noise amplitudes of the three attention phases."""

    phase1_frac: float = 0.3
    phase2_frac: float = 0.3
    phase3_frac: float = 0.4
    jitter: float = 0.05
    seed: int = 0
    paper_band: bool = True

    def validate(self) -> None:
        total = self.phase1_frac + self.phase2_frac + self.phase3_frac
        if abs(total - 1.0) > 1e-9:
            raise ParamError(f"phase fractions sum to {total}, expected 1")
        if self.paper_band:
            if not (0.15 <= self.phase1_frac <= 0.45):
                raise ParamError("phase1 fraction outside the 0.30 +/- 0.15 band")
            if not (0.25 <= self.phase2_frac <= 0.35):
                raise ParamError("phase2 fraction outside the 0.30 +/- 0.05 band")
            if not (0.10 <= self.phase3_frac <= 0.50):
                raise ParamError("phase3 fraction outside the 0.30 +/- 0.20 band")
        if self.jitter < 0:
            raise ParamError("jitter must be non-negative")


def stable_profile(seed: int = 0) -> PhaseProfile:
    """All-stabilization, zero-noise profile (every step is the tight map)."""
    return PhaseProfile(phase1_frac=0.0, phase2_frac=1.0, phase3_frac=0.0,
                        jitter=0.0, seed=seed, paper_band=False)


@dataclass
class SyntheticScene:
    """Posed figure plus exact per-token and per-instruction ground truth."""

    pose: str
    seed: int
    image_size: int
    keypoints: KeypointSet
    image: ImageBuffer
    token_regions: dict[str, np.ndarray]  # token -> bool (H, W)
    instruction_masks: dict[str, np.ndarray]  # raw instruction -> bool (H, W)
    primary_instruction: str
    body_mask: np.ndarray = field(repr=False, default=None)

    def ground_truth(self, instruction: str) -> np.ndarray:
        return self.instruction_masks[instruction]


def _disk(grid_x: np.ndarray, grid_y: np.ndarray, cx: float, cy: float, r: float) -> np.ndarray:
    return (grid_x - cx) ** 2 + (grid_y - cy) ** 2 <= r * r


def _ellipse(grid_x, grid_y, cx, cy, a, b) -> np.ndarray:
    return ((grid_x - cx) / a) ** 2 + ((grid_y - cy) / b) ** 2 <= 1.0


def _capsule(grid_x, grid_y, p0, p1, r) -> np.ndarray:
    """Points within distance r of the segment p0-p1."""
    px, py = p0
    qx, qy = p1
    vx, vy = qx - px, qy - py
    vv = vx * vx + vy * vy
    if vv == 0:
        return _disk(grid_x, grid_y, px, py, r)
    t = np.clip(((grid_x - px) * vx + (grid_y - py) * vy) / vv, 0.0, 1.0)
    dx = grid_x - (px + t * vx)
    dy = grid_y - (py + t * vy)
    return dx * dx + dy * dy <= r * r


_BASE_POSES = {
    "standing": {
        "Nose": (0.50, 0.095),
        "Neck": (0.50, 0.175),
        "RShoulder": (0.385, 0.20), "LShoulder": (0.615, 0.20),
        "RElbow": (0.305, 0.295), "LElbow": (0.695, 0.295),
        "RWrist": (0.255, 0.375), "LWrist": (0.745, 0.375),
        "MidHip": (0.50, 0.485), "RHip": (0.445, 0.485), "LHip": (0.555, 0.485),
        "RKnee": (0.435, 0.665), "LKnee": (0.565, 0.665),
        "RAnkle": (0.425, 0.845), "LAnkle": (0.575, 0.845),
    },
    "seated": {
        "Nose": (0.46, 0.13),
        "Neck": (0.46, 0.21),
        "RShoulder": (0.35, 0.235), "LShoulder": (0.57, 0.235),
        "RElbow": (0.29, 0.33), "LElbow": (0.64, 0.33),
        "RWrist": (0.33, 0.40), "LWrist": (0.60, 0.40),
        "MidHip": (0.46, 0.52), "RHip": (0.405, 0.52), "LHip": (0.515, 0.52),
        "RKnee": (0.60, 0.56), "LKnee": (0.68, 0.575),
        "RAnkle": (0.58, 0.76), "LAnkle": (0.66, 0.775),
    },
    "articulated": {
        "Nose": (0.52, 0.115),
        "Neck": (0.52, 0.195),
        "RShoulder": (0.405, 0.215), "LShoulder": (0.635, 0.215),
        "RElbow": (0.315, 0.14), "LElbow": (0.725, 0.31),
        "RWrist": (0.39, 0.075), "LWrist": (0.655, 0.375),
        "MidHip": (0.52, 0.50), "RHip": (0.465, 0.50), "LHip": (0.575, 0.50),
        "RKnee": (0.38, 0.63), "LKnee": (0.615, 0.685),
        "RAnkle": (0.45, 0.79), "LAnkle": (0.635, 0.865),
    },
}


def _estimated_keypoints(true_kps: KeypointSet, seed: int, noise_px: float,
                         outlier_prob: float, outlier_px: float) -> KeypointSet:
    # Pose-estimator view of the skeleton: small per-joint noise plus the
    # occasional badly misplaced joint.
    rng = np.random.Generator(np.random.PCG64(seed * 31337 + 97))
    entries = {}
    size_x, size_y = true_kps.image_width, true_kps.image_height
    for name, (x, y, conf) in true_kps.entries.items():
        sigma = outlier_px if rng.random() < outlier_prob else noise_px
        nx = float(np.clip(x + rng.normal(0.0, sigma), 0, size_x - 1))
        ny = float(np.clip(y + rng.normal(0.0, sigma), 0, size_y - 1))
        entries[name] = (round(nx, 2), round(ny, 2), conf)
    return KeypointSet(entries=entries, image_width=size_x, image_height=size_y)


def _pose_keypoints(pose: str, seed: int, image_size: int) -> KeypointSet:
    if pose not in _BASE_POSES:
        raise ParamError(f"unknown pose preset {pose!r}")
    rng = np.random.Generator(np.random.PCG64(seed * 7919 + 11))
    entries = {}
    for name, (fx, fy) in _BASE_POSES[pose].items():
        jx = rng.normal(0.0, 0.004)
        jy = rng.normal(0.0, 0.004)
        x = min(0.98, max(0.02, fx + jx)) * image_size
        y = min(0.98, max(0.02, fy + jy)) * image_size
        conf = float(round(0.85 + 0.13 * rng.random(), 4))
        entries[name] = (float(round(x, 2)), float(round(y, 2)), conf)
    return KeypointSet(entries=entries, image_width=image_size, image_height=image_size)


def _token_regions(kps: KeypointSet, image_size: int) -> dict[str, np.ndarray]:
    s = float(image_size)
    jj, ii = np.meshgrid(np.arange(image_size, dtype=np.float64),
                         np.arange(image_size, dtype=np.float64))
    # grid_x follows pixel x (columns), grid_y rows.
    gx, gy = jj, ii

    def p(name: str) -> tuple[float, float]:
        x, y, _ = kps.entries[name]
        return x, y

    def mid(a: str, b: str) -> tuple[float, float]:
        ax, ay = p(a)
        bx, by = p(b)
        return (ax + bx) / 2.0, (ay + by) / 2.0

    def lerp(a: str, b: str, t: float) -> tuple[float, float]:
        ax, ay = p(a)
        bx, by = p(b)
        return ax + (bx - ax) * t, ay + (by - ay) * t

    neck = p("Neck")
    torso_mid = mid("Neck", "MidHip")
    regions: dict[str, np.ndarray] = {}
    regions["Forehead"] = _disk(gx, gy, *lerp("Nose", "Neck", -0.35), 0.04 * s)
    regions["Neck"] = _disk(gx, gy, *neck, _NECK_R * s)
    regions["Shoulder"] = _disk(gx, gy, *p("RShoulder"), _SHOULDER_R * s) | _disk(gx, gy, *p("LShoulder"), _SHOULDER_R * s)
    regions["Elbow"] = _disk(gx, gy, *p("RElbow"), _ELBOW_R * s) | _disk(gx, gy, *p("LElbow"), _ELBOW_R * s)
    regions["Wrist"] = _disk(gx, gy, *p("RWrist"), _WRIST_R * s) | _disk(gx, gy, *p("LWrist"), _WRIST_R * s)
    regions["Hand"] = _disk(gx, gy, *p("RWrist"), _WRIST_R * 1.2 * s) | _disk(gx, gy, *p("LWrist"), _WRIST_R * 1.2 * s)
    regions["Chest"] = _ellipse(gx, gy, *lerp("Neck", "MidHip", 0.3), _CHEST[0] * s, _CHEST[1] * s)
    regions["Waist"] = _ellipse(gx, gy, *lerp("MidHip", "Neck", 0.3), _WAIST[0] * s, _WAIST[1] * s)
    regions["Belly"] = _ellipse(gx, gy, *lerp("MidHip", "Neck", 0.15), _BELLY[0] * s, _BELLY[1] * s)
    torso = _capsule(gx, gy, neck, p("MidHip"), _TORSO_HALF_W * s)
    torso &= gy >= neck[1] - 0.35 * _TORSO_HALF_W * s  # no cap above the neck line
    regions["Torso"] = torso
    regions["Hip"] = (
        _ellipse(gx, gy, *p("MidHip"), _PELVIS[0] * s, _PELVIS[1] * s)
        | _disk(gx, gy, *p("RHip"), _HIP_R * s)
        | _disk(gx, gy, *p("LHip"), _HIP_R * s)
    )
    regions["Arms"] = (
        _capsule(gx, gy, p("RShoulder"), p("RElbow"), _ARM_R * s)
        | _capsule(gx, gy, p("RElbow"), p("RWrist"), _ARM_R * s)
        | _capsule(gx, gy, p("LShoulder"), p("LElbow"), _ARM_R * s)
        | _capsule(gx, gy, p("LElbow"), p("LWrist"), _ARM_R * s)
    )
    regions["Thigh"] = (
        _capsule(gx, gy, p("RHip"), p("RKnee"), _THIGH_R * s)
        | _capsule(gx, gy, p("LHip"), p("LKnee"), _THIGH_R * s)
    )
    regions["Knee"] = _disk(gx, gy, *p("RKnee"), _KNEE_R * s) | _disk(gx, gy, *p("LKnee"), _KNEE_R * s)
    regions["Shank"] = (
        _capsule(gx, gy, p("RKnee"), p("RAnkle"), _SHANK_R * s)
        | _capsule(gx, gy, p("LKnee"), p("LAnkle"), _SHANK_R * s)
    )
    regions["Ankle"] = _disk(gx, gy, *p("RAnkle"), _ANKLE_R * s) | _disk(gx, gy, *p("LAnkle"), _ANKLE_R * s)
    return regions


def _anchor_row(token: str, kps: KeypointSet) -> float:
    """Image row of a coverage anchor (star tokens use keypoint rows)."""
    table = default_anchor_table()
    rules = table.rules_for(token)
    if rules:
        point = resolve_anchor_point(rules[0], kps, confidence_floor=0.0)
        if point is not None:
            return point[1]
    sides = {
        "Neck": ("Neck",), "Shoulder": ("RShoulder", "LShoulder"),
        "Elbow": ("RElbow", "LElbow"), "Wrist": ("RWrist", "LWrist"),
        "Hip": ("RHip", "LHip"), "Knee": ("RKnee", "LKnee"),
        "Ankle": ("RAnkle", "LAnkle"),
    }.get(token, ())
    ys = [kps.entries[n][1] for n in sides if n in kps.entries]
    if not ys:
        raise ParamError(f"cannot place anchor row for token {token!r}")
    return sum(ys) / len(ys)


def _instruction_mask(instruction: str, regions: dict[str, np.ndarray],
                      kps: KeypointSet, image_size: int) -> np.ndarray:
    group = instruction_to_group(instruction)
    union = np.zeros((image_size, image_size), dtype=bool)
    for token in group.star_tokens + group.fleshy_tokens:
        if token in regions:
            union |= regions[token]
    # Garments cover the torso column continuously, not floating part blobs.
    if group.start_anchor == "Neck":
        union |= regions["Torso"]
    if group.include_legs:
        union |= regions["Hip"]
    rows = np.arange(image_size)[:, None]
    end_row = _anchor_row(group.end_anchor, kps)
    union &= rows <= end_row
    if group.start_anchor != "Neck":
        start_row = _anchor_row(group.start_anchor, kps)
        union &= rows >= start_row
    return union


def _render_image(body: np.ndarray, garment: np.ndarray, image_size: int, seed: int) -> ImageBuffer:
    """Figure over a cluttered background: furniture-like blocks, a few thin
    high-contrast strokes, and mild sensor noise, so the edge detector faces
    realistic distractors."""
    from scipy import ndimage as _ndi

    rng = np.random.Generator(np.random.PCG64(seed * 6151 + 401))
    img = np.full((image_size, image_size), BACKGROUND_TONE, dtype=np.float64)
    jj, ii = np.meshgrid(np.arange(image_size, dtype=np.float64),
                         np.arange(image_size, dtype=np.float64))
    # Clutter keeps a standoff from the figure, as furniture behind a person.
    standoff = _ndi.distance_transform_edt(~body) > 0.30 * image_size
    for _ in range(8):
        cx, cy = rng.uniform(0, image_size, 2)
        if rng.random() < 0.5:
            w, h = rng.uniform(0.06, 0.22, 2) * image_size
            block = (np.abs(jj - cx) <= w) & (np.abs(ii - cy) <= h)
        else:
            a, b = rng.uniform(0.05, 0.18, 2) * image_size
            block = ((jj - cx) / a) ** 2 + ((ii - cy) / b) ** 2 <= 1.0
        block &= standoff
        img[block] = rng.uniform(60, 185)
    for _ in range(4):
        x0, y0, x1, y1 = rng.uniform(0, image_size, 4)
        n = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
        xs = np.clip(np.linspace(x0, x1, n).astype(int), 0, image_size - 1)
        ys = np.clip(np.linspace(y0, y1, n).astype(int), 0, image_size - 1)
        keep = standoff[ys, xs]
        img[ys[keep], xs[keep]] = rng.uniform(195, 240)
        ys2 = np.minimum(ys + 1, image_size - 1)
        keep2 = standoff[ys2, xs]
        img[ys2[keep2], xs[keep2]] = rng.uniform(195, 240)
    img[body] = BODY_TONE
    img[garment] = GARMENT_TONE
    img += rng.normal(0.0, 2.0, img.shape)
    arr = np.clip(img, 0, 255).astype(np.uint8)
    return ImageBuffer(width=image_size, height=image_size, channels=1, data=arr)


def generate_scene(pose: str = "standing", seed: int = 0, image_size: int = 256,
                   primary_instruction: str = "belly-length blouse",
                   instructions: tuple[str, ...] = DEFAULT_INSTRUCTIONS,
                   keypoint_noise_px: float = 0.0,
                   keypoint_outlier_prob: float = 0.0,
                   keypoint_outlier_px: float = 12.0) -> SyntheticScene:
    """Deterministic scene for a (pose, seed) pair.

    keypoint_noise_px adds estimator error to the exported keypoints while
    the rendered anatomy and ground truth stay on the true joints.
    """
    if image_size % SELF_GRID != 0:
        raise ParamError(f"image size must be a multiple of {SELF_GRID}")
    true_kps = _pose_keypoints(pose, seed, image_size)
    kps = _estimated_keypoints(true_kps, seed, keypoint_noise_px,
                               keypoint_outlier_prob, keypoint_outlier_px)
    regions = _token_regions(true_kps, image_size)
    body = np.zeros((image_size, image_size), dtype=bool)
    for name in ("Forehead", "Neck", "Torso", "Hip", "Arms", "Thigh", "Shank",
                 "Knee", "Ankle", "Hand"):
        body |= regions[name]
    wanted = dict.fromkeys((primary_instruction, *instructions))
    masks = {instr: _instruction_mask(instr, regions, true_kps, image_size) for instr in wanted}
    image = _render_image(body, masks[primary_instruction], image_size, seed)
    return SyntheticScene(
        pose=pose, seed=seed, image_size=image_size, keypoints=kps, image=image,
        token_regions=regions, instruction_masks=masks,
        primary_instruction=primary_instruction, body_mask=body,
    )


def _coverage(region: np.ndarray, grid: int) -> np.ndarray:
    h = region.shape[0]
    block = h // grid
    return region.astype(np.float64).reshape(grid, block, grid, block).mean(axis=(1, 3))


def _signed_distance(indicator: np.ndarray) -> np.ndarray:
    """Positive inside, negative outside, in cells."""
    ind = indicator.astype(bool)
    if not ind.any():
        return np.full(indicator.shape, -max(indicator.shape), dtype=np.float64)
    inside = ndimage.distance_transform_edt(ind)
    outside = ndimage.distance_transform_edt(~ind)
    return inside - outside


def _region_distance(region: np.ndarray, grid: int) -> np.ndarray:
    """Signed distance to the region boundary, in grid cells, sampled by
    block-averaging the image-resolution distance field. Avoids the half-cell
    position snap a binarized indicator would introduce."""
    reg = region.astype(bool)
    h = reg.shape[0]
    block = h // grid
    if not reg.any():
        return np.full((grid, grid), -float(grid), dtype=np.float64)
    inside = ndimage.distance_transform_edt(reg)
    outside = ndimage.distance_transform_edt(~reg)
    d_img = (inside - outside) / float(block)
    return d_img.reshape(grid, block, grid, block).mean(axis=(1, 3))


def _profile_map(dist: np.ndarray, shift: float, softness: float) -> np.ndarray:
    """Plateau map: 1 deep inside the (shifted) region, 0 far outside."""
    return np.clip(0.5 + (dist + shift) / (2.0 * softness), 0.0, 1.0)


def _grid_indicator(region: np.ndarray, grid: int) -> np.ndarray:
    cov = _coverage(region, grid)
    ind = cov > 0.5
    if not ind.any():
        ind = np.zeros_like(cov, dtype=bool)
        ind[np.unravel_index(np.argmax(cov), cov.shape)] = True
    return ind


# Tuned phase-noise magnitudes for the dynamics suite (cells at 16x16).
_PHASE1_EXPAND = 2.0
_PHASE1_SHIFT = 3
_PHASE1_GHOST = 0.95
_PHASE3_OVER = 1.2
_PHASE3_UNDER = 1.2
_PHASE3_SHIFT = 1
_CROSS_SHIFT = 0.25
_CROSS_SOFTNESS = 0.5
_SELF_SHIFT = 0.0
_SELF_SOFTNESS = 0.5
# The garment-noun token attends diffusely: a blurry core well inside the
# garment, never its precise extent. Precision must come from body tokens.
_CLOTHES_ERODE = 2.4
_CLOTHES_SOFTNESS = 1.2
# Star and fleshy maps carry a low-level context halo over the whole figure,
# the leakage the radial constraint is there to trim.
_HALO_LEVEL = 0.0
# Self-attention sees the whole figure as one edge-coherent region; it has
# no notion of which parts the instruction covers. Garment pixels stand out
# from the rest of the body only moderately.
# Self-attention is anatomy-agnostic: one coherent figure, sharp edges,
# no notion of which parts the instruction covers.
_SELF_BODY_LEVEL = 0.45


def _token_radii(token: str, kind: str, keypoints) -> tuple[float, float] | None:
    """(average, max) grid radius the pipeline would derive for this token."""
    if kind == "star":
        pairs = []
        for side in STAR_KEYPOINTS[token]:
            avg = choose_radius(side, keypoints, "average")
            big = choose_radius(side, keypoints, "max")
            pairs.append((avg, big))
        if not pairs:
            return None
        return (sum(p[0] for p in pairs) / len(pairs), sum(p[1] for p in pairs) / len(pairs))
    if kind == "fleshy":
        rules = default_anchor_table().rules_for(token)
        vals = []
        for rule in rules:
            point = resolve_anchor_point(rule, keypoints, 0.0)
            if point is None:
                continue
            refs = list(rule.keys())
            vals.append((radius_for_point(point, refs, keypoints, "average"),
                         radius_for_point(point, refs, keypoints, "max")))
        if not vals:
            return None
        return (sum(v[0] for v in vals) / len(vals), sum(v[1] for v in vals) / len(vals))
    return None


def generate_attention(scene: SyntheticScene, profile: PhaseProfile,
                       steps: int = 100) -> tuple[AttentionStack, SelfAttentionStack]:
    """Synthesize the cross- and self-attention stacks for a scene.

    Per token: phase-one steps show the plateau widened, displaced, and
    contaminated by a ghost blob that fades as the phase progresses;
    phase-two steps are the tight plateau plus jitter noise; phase-three
    steps randomly widen or shrink the plateau and wobble its position.
    """
    profile.validate()
    rng = np.random.Generator(np.random.PCG64(profile.seed * 104729 + scene.seed * 13 + 7))
    group = instruction_to_group(scene.primary_instruction)
    token_names = group.all_tokens()
    kinds = (["star"] * len(group.star_tokens)
             + ["fleshy"] * len(group.fleshy_tokens)
             + ["clothes"] * len(group.clothes_tokens))

    n_phase1 = int(round(profile.phase1_frac * steps))
    n_phase2 = int(round(profile.phase2_frac * steps))

    garment_gt = scene.ground_truth(scene.primary_instruction)
    body_ind = _grid_indicator(scene.body_mask, CROSS_GRID)
    body_halo = _HALO_LEVEL * _profile_map(_signed_distance(body_ind), _CROSS_SHIFT, _CROSS_SOFTNESS)
    maps = np.zeros((steps, len(token_names), CROSS_GRID, CROSS_GRID), dtype=np.float64)
    for n, token in enumerate(token_names):
        region = garment_gt if kinds[n] == "clothes" else scene.token_regions[token]
        ind = _grid_indicator(region, CROSS_GRID)
        dist = _region_distance(region, CROSS_GRID)
        if kinds[n] == "clothes":
            shift0, soft0 = _CROSS_SHIFT - _CLOTHES_ERODE, _CLOTHES_SOFTNESS
            halo = None
        else:
            shift0, soft0 = _CROSS_SHIFT, _CROSS_SOFTNESS
            halo = body_halo if _HALO_LEVEL > 0 else None
        base = _profile_map(dist, shift0, soft0)
        if halo is not None:
            base = np.maximum(base, halo)

        # Ghost target for the convergence phase: a plausible-looking blob in
        # the wrong place. For anatomical tokens it sits between the radii the
        # pipeline derives (inside max, outside average), so whether it
        # survives depends on the radius mode. The garment token's ghost is
        # wider and body-targeted; nothing downstream can clip it, so only
        # the step weighting defends against it.
        rows, cols = np.nonzero(ind)
        ci, cj = rows.mean(), cols.mean()
        radii = _token_radii(token, kinds[n], scene.keypoints)
        if radii is None:
            glo, ghi = 3.5, 6.5
        else:
            glo = radii[0] + 1.8
            ghi = max(radii[1] + 1.0, glo + 0.5)
        ii, jjg = np.ogrid[0:CROSS_GRID, 0:CROSS_GRID]
        cell_dist = np.sqrt((ii - ci) ** 2 + (jjg - cj) ** 2)
        ring = (cell_dist >= glo) & (cell_dist <= ghi) & ~ind
        on_body = ring & body_ind
        pool = np.argwhere(on_body if on_body.any() else ring)
        if pool.size:
            gi, gj = pool[int(rng.integers(0, len(pool)))]
        else:
            gi, gj = int(np.clip(ci + glo, 1, CROSS_GRID - 2)), int(cj)
        ghost_r = 3.0 if kinds[n] == "clothes" else 1.6
        ghost = np.clip(1.0 - np.sqrt((ii - gi) ** 2 + (jjg - gj) ** 2) / ghost_r, 0.0, 1.0)
        if kinds[n] == "clothes":
            adj = (dist <= -2.0) & (dist >= -4.5)
            adj_body = adj & body_ind
            pool_adj = np.argwhere(adj_body if adj_body.any() else adj)
            if pool_adj.size:
                ghost = np.zeros((CROSS_GRID, CROSS_GRID))
                for _ in range(3):
                    gi, gj = pool_adj[int(rng.integers(0, len(pool_adj)))]
                    ghost = np.maximum(ghost, np.clip(1.0 - np.sqrt((ii - gi) ** 2 + (jjg - gj) ** 2) / ghost_r, 0.0, 1.0))
        shift_dir = (rng.integers(-1, 2), rng.integers(-1, 2))

        for t in range(steps):
            if kinds[n] == "clothes":
                if t < n_phase1 and n_phase1 > 0:
                    progress = t / n_phase1
                    fade = 1.0 if progress < 0.6 else 2.5 * (1.0 - progress)
                    step_map = np.maximum(fade * ghost, 0.15 * base)
                    step_map = np.maximum(step_map, (1.0 - fade) * base)
                elif t >= n_phase1 + n_phase2 and rng.random() < 0.10:
                    pool_b = np.argwhere(body_ind)
                    bi, bj = pool_b[int(rng.integers(0, len(pool_b)))]
                    bomb = np.clip(1.0 - np.sqrt((ii - bi) ** 2 + (jjg - bj) ** 2) / 2.5, 0.0, 1.0)
                    step_map = np.maximum(bomb, 0.2 * base)
                else:
                    step_map = base.copy()
            elif t < n_phase1 and n_phase1 > 0:
                progress = t / n_phase1
                if progress < 0.5:
                    # attention sits entirely on the wrong target early on
                    step_map = np.maximum(_PHASE1_GHOST * ghost, 0.2 * base)
                else:
                    fade = 2.0 * (1.0 - progress)  # 1 -> 0 over the second half
                    step_map = _profile_map(dist, shift0 + _PHASE1_EXPAND * fade, soft0 + 1.4 * fade)
                    step_map = np.maximum(step_map, _PHASE1_GHOST * fade * ghost)
                    shift_cells = int(round(_PHASE1_SHIFT * fade))
                    if shift_cells:
                        step_map = shift_2d(step_map, int(shift_cells * shift_dir[0]), int(shift_cells * shift_dir[1]))
            elif t < n_phase1 + n_phase2 or n_phase1 + n_phase2 >= steps:
                step_map = base.copy()
                if profile.jitter > 0 and rng.random() < min(1.0, 15.0 * profile.jitter):
                    di = int(rng.integers(-1, 2))
                    dj = int(rng.integers(-1, 2))
                    if di or dj:
                        step_map = shift_2d(step_map, di, dj)
            else:
                roll = rng.random()
                if roll < 0.10:
                    # fully divergent step: attention jumps to a random body spot
                    pool_b = np.argwhere(body_ind & ~ind)
                    bi, bj = pool_b[int(rng.integers(0, len(pool_b)))] if pool_b.size else (gi, gj)
                    bomb = np.clip(1.0 - np.sqrt((ii - bi) ** 2 + (jjg - bj) ** 2) / 2.5, 0.0, 1.0)
                    step_map = np.maximum(bomb, 0.2 * base)
                elif roll < 0.60:
                    step_map = _profile_map(dist, shift0 + rng.uniform(0.5, 1.0) * _PHASE3_OVER, soft0)
                else:
                    step_map = _profile_map(dist, shift0 - rng.uniform(0.5, 1.0) * _PHASE3_UNDER, soft0)
                di = int(rng.integers(-_PHASE3_SHIFT, _PHASE3_SHIFT + 1))
                dj = int(rng.integers(-_PHASE3_SHIFT, _PHASE3_SHIFT + 1))
                if di or dj:
                    step_map = shift_2d(step_map, di, dj)
            if halo is not None and t >= n_phase1:
                step_map = np.maximum(step_map, halo)
            if profile.jitter > 0:
                step_map = step_map + rng.uniform(-profile.jitter, profile.jitter, step_map.shape)
            maps[t, n] = np.clip(step_map, 0.0, 1.0)

    attn = AttentionStack(
        steps=steps, tokens=len(token_names), height=CROSS_GRID, width=CROSS_GRID,
        data=maps.astype(np.float32), token_names=token_names, token_kinds=kinds,
    )
    attn.validate()

    garment_soft = _profile_map(_region_distance(garment_gt, SELF_GRID),
                                _SELF_SHIFT, _SELF_SOFTNESS)
    body_soft = _profile_map(_region_distance(scene.body_mask, SELF_GRID),
                             _SELF_SHIFT, _SELF_SOFTNESS)
    self_base = _SELF_BODY_LEVEL * np.maximum(garment_soft, body_soft)
    self_maps = np.zeros((8, SELF_GRID, SELF_GRID), dtype=np.float64)
    for k in range(8):
        noise = rng.uniform(-profile.jitter, profile.jitter, self_base.shape) if profile.jitter > 0 else 0.0
        self_maps[k] = np.clip(self_base + noise, 0.0, 1.0)
    self_attn = SelfAttentionStack(maps=8, height=SELF_GRID, width=SELF_GRID,
                                   data=self_maps.astype(np.float32))
    self_attn.validate()
    return attn, self_attn


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def emit_fixture(out_dir: str, pose: str = "standing", seed: int = 0,
                 image_size: int = 256, profile: PhaseProfile | None = None,
                 primary_instruction: str = "belly-length blouse",
                 instructions: tuple[str, ...] = DEFAULT_INSTRUCTIONS) -> dict:
    """Write a complete fixture directory and return its manifest."""
    profile = profile or PhaseProfile(seed=seed)
    scene = generate_scene(pose, seed, image_size, primary_instruction, instructions)
    attn, self_attn = generate_attention(scene, profile)
    os.makedirs(out_dir, exist_ok=True)
    write_image(scene.image, os.path.join(out_dir, "image.png"))
    write_attention_stack(attn, os.path.join(out_dir, "attn.astd"))
    write_self_attention_stack(self_attn, os.path.join(out_dir, "self.astd"))
    write_keypoints(scene.keypoints, os.path.join(out_dir, "keypoints.json"))
    gt_files = {}
    for instr, mask in scene.instruction_masks.items():
        name = f"gt_{_slug(instr)}.png"
        write_mask_png(mask, os.path.join(out_dir, name))
        gt_files[instr] = name
    manifest = {
        "pose": pose,
        "seed": seed,
        "image_size": image_size,
        "instruction": primary_instruction,
        "ground_truth": gt_files,
        "phase_fracs": [profile.phase1_frac, profile.phase2_frac, profile.phase3_frac],
        "jitter": profile.jitter,
    }
    with open(os.path.join(out_dir, "fixture.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


# --- canonical evaluation suites -------------------------------------------

SWEEP_SUITE_SIZE = 50
SWEEP_PROFILE = dict(phase1_frac=0.3, phase2_frac=0.3, phase3_frac=0.4, jitter=0.05)
SWEEP_KEYPOINT_NOISE = dict(keypoint_noise_px=3.0, keypoint_outlier_prob=0.15)


def sweep_suite_params(count: int = SWEEP_SUITE_SIZE) -> list[tuple[int, str, str]]:
    """(seed, pose, instruction) triples of the phase-dynamics suite.

    Poses and instructions cycle so every combination appears; seeds are the
    fixture indices, fixed once so the suite is fully deterministic.
    """
    out = []
    for idx in range(count):
        pose = POSE_PRESETS[idx % 3]
        instr = DEFAULT_INSTRUCTIONS[:3][(idx // 3) % 3]
        out.append((idx, pose, instr))
    return out


def sweep_suite_fixture(seed: int, pose: str, instruction: str, image_size: int = 256):
    """One in-memory fixture of the phase-dynamics suite."""
    scene = generate_scene(pose, seed, image_size, primary_instruction=instruction,
                           **SWEEP_KEYPOINT_NOISE)
    profile = PhaseProfile(seed=seed, **SWEEP_PROFILE)
    attn, self_attn = generate_attention(scene, profile)
    return scene, attn, self_attn


def emit_sweep_suite(root: str, count: int = SWEEP_SUITE_SIZE, image_size: int = 256) -> list[str]:
    """Write the canonical suite as fixture directories under root."""
    paths = []
    for seed, pose, instr in sweep_suite_params(count):
        out_dir = os.path.join(root, f"fx{seed:03d}")
        profile = PhaseProfile(seed=seed, **SWEEP_PROFILE)
        scene = generate_scene(pose, seed, image_size, primary_instruction=instr,
                               **SWEEP_KEYPOINT_NOISE)
        attn, self_attn = generate_attention(scene, profile)
        os.makedirs(out_dir, exist_ok=True)
        write_image(scene.image, os.path.join(out_dir, "image.png"))
        write_attention_stack(attn, os.path.join(out_dir, "attn.astd"))
        write_self_attention_stack(self_attn, os.path.join(out_dir, "self.astd"))
        write_keypoints(scene.keypoints, os.path.join(out_dir, "keypoints.json"))
        gt_files = {}
        for name, mask in scene.instruction_masks.items():
            fname = f"gt_{_slug(name)}.png"
            write_mask_png(mask, os.path.join(out_dir, fname))
            gt_files[name] = fname
        manifest = {
            "pose": pose, "seed": seed, "image_size": image_size,
            "instruction": instr, "ground_truth": gt_files,
        }
        with open(os.path.join(out_dir, "fixture.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        paths.append(out_dir)
    return paths
