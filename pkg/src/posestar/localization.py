"""Pose-guided calibration of token attention maps.

Star token maps are translated so their attention centroid lands on the
matching skeletal keypoint; fleshy (volumetric) token maps are pulled to
skeleton-frame anchor points; everything but clothes tokens is then clipped
to a disk of biomechanically plausible radius around its anchor.

All map math happens at grid resolution with whole-cell translations and
zero fill. Keypoints are pixel coordinates; ``grid_cell`` converts them with
uniform floor scaling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import DegenerateMapError, ParamError
from .rasterops import shift_2d
from .tensorio import KeypointSet

DEFAULT_CONFIDENCE_FLOOR = 0.1
DEFAULT_RADIUS = 4.0

# Side expansion of the side-agnostic star vocabulary into BODY-25 names.
STAR_KEYPOINTS = {
    "Neck": ("Neck",),
    "Shoulder": ("RShoulder", "LShoulder"),
    "Elbow": ("RElbow", "LElbow"),
    "Wrist": ("RWrist", "LWrist"),
    "Hip": ("RHip", "LHip"),
    "Knee": ("RKnee", "LKnee"),
    "Ankle": ("RAnkle", "LAnkle"),
}

# Skeleton edges used when deriving a radius from adjacent bone lengths.
SKELETON_ADJACENCY = {
    "Nose": ("Neck", "REye", "LEye"),
    "Neck": ("Nose", "RShoulder", "LShoulder", "MidHip"),
    "RShoulder": ("Neck", "RElbow"),
    "LShoulder": ("Neck", "LElbow"),
    "RElbow": ("RShoulder", "RWrist"),
    "LElbow": ("LShoulder", "LWrist"),
    "RWrist": ("RElbow",),
    "LWrist": ("LElbow",),
    "MidHip": ("Neck", "RHip", "LHip"),
    "RHip": ("MidHip", "RKnee"),
    "LHip": ("MidHip", "LKnee"),
    "RKnee": ("RHip", "RAnkle"),
    "LKnee": ("LHip", "LAnkle"),
    "RAnkle": ("RKnee", "RHeel", "RBigToe"),
    "LAnkle": ("LKnee", "LHeel", "LBigToe"),
}


@dataclass
class RegionMap:
    """One token's saliency map at grid resolution."""

    values: np.ndarray  # (height, width) float64
    anchor: tuple[int, int] | None = None  # (row, col) grid cell
    radius: float | None = None
    degenerate: bool = False
    fallback: bool = False
    label: str = ""

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class AnchorTable:
    """Fleshy token -> list of affine keypoint combinations."""

    anchors: dict[str, list[dict[str, float]]] = field(default_factory=dict)

    def validate(self) -> None:
        from .tensorio import BODY25_NAMES

        for token, rules in self.anchors.items():
            for rule in rules:
                if abs(sum(rule.values()) - 1.0) > 1e-9:
                    raise ValueError(f"anchor weights for {token} do not sum to 1")
                for name in rule:
                    if name not in BODY25_NAMES:
                        raise ValueError(f"anchor rule for {token} references unknown keypoint {name}")

    def rules_for(self, token: str) -> list[dict[str, float]]:
        return self.anchors.get(token, [])


@lru_cache(maxsize=1)
def default_anchor_table() -> AnchorTable:
    with resources.files("posestar.data").joinpath("anchor_table.json").open("r", encoding="utf-8") as fh:
        doc = json.load(fh)
    table = AnchorTable(anchors=doc["anchors"])
    table.validate()
    return table


def load_anchor_table(path: str | None = None) -> AnchorTable:
    if path is None:
        return default_anchor_table()
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    table = AnchorTable(anchors=doc["anchors"])
    table.validate()
    return table


def grid_cell(x: float, y: float, image_dims: tuple[int, int], grid_dims: tuple[int, int]) -> tuple[int, int]:
    """Pixel (x, y) -> (row, col) grid cell via uniform floor scaling."""
    img_w, img_h = image_dims
    grid_h, grid_w = grid_dims
    col = min(grid_w - 1, max(0, int(math.floor(x / img_w * grid_w))))
    row = min(grid_h - 1, max(0, int(math.floor(y / img_h * grid_h))))
    return row, col


def normalize_map(region: RegionMap) -> RegionMap:
    """Linearly rescale values to [0, 1] with max 1.

    An all-zero map cannot be rescaled; it comes back unchanged and flagged
    degenerate instead of failing.
    """
    peak = float(region.values.max(initial=0.0))
    if peak <= 0.0:
        return RegionMap(values=region.values.copy(), anchor=region.anchor,
                         radius=region.radius, degenerate=True, label=region.label)
    return RegionMap(values=region.values / peak, anchor=region.anchor,
                     radius=region.radius, degenerate=False, label=region.label)


def attention_centroid(region: RegionMap) -> tuple[int, int]:
    """Value-weighted mean coordinate, rounded half-up to the nearest cell."""
    total = float(region.values.sum())
    if total <= 0.0:
        raise DegenerateMapError("centroid of an all-zero map is undefined")
    rows = np.arange(region.height, dtype=np.float64)
    cols = np.arange(region.width, dtype=np.float64)
    mean_i = float((region.values.sum(axis=1) * rows).sum() / total)
    mean_j = float((region.values.sum(axis=0) * cols).sum() / total)
    return int(math.floor(mean_i + 0.5)), int(math.floor(mean_j + 0.5))


def translate_to(region: RegionMap, target: tuple[int, int]) -> RegionMap:
    """Shift the map by the whole-cell offset taking its centroid to target."""
    centroid = attention_centroid(region)
    di = target[0] - centroid[0]
    dj = target[1] - centroid[1]
    return RegionMap(values=shift_2d(region.values, di, dj), anchor=target,
                     radius=region.radius, label=region.label)


def translate_local_mode(region: RegionMap, target: tuple[int, int], window_radius: float) -> RegionMap:
    """Align the attention mass nearest the target with the target cell.

    Tokens that fire on both body sides (shoulders, wrists, arm segments)
    have a global centroid between the sides; translating that to one side's
    keypoint misplaces both lobes. Restricting the centroid to a window
    around the keypoint aligns the local mode instead. An empty window falls
    back to the global centroid.
    """
    h, w = region.values.shape
    ii, jj = np.ogrid[0:h, 0:w]
    window = (ii - target[0]) ** 2 + (jj - target[1]) ** 2 <= window_radius * window_radius
    local = np.where(window, region.values, 0.0)
    if local.sum() <= 0.0:
        return translate_to(region, target)
    local_region = RegionMap(values=local, label=region.label)
    centroid = attention_centroid(local_region)
    di = target[0] - centroid[0]
    dj = target[1] - centroid[1]
    return RegionMap(values=shift_2d(region.values, di, dj), anchor=target,
                     radius=region.radius, label=region.label)


def calibrate_star(
    region: RegionMap,
    keypoint: tuple[float, float] | None,
    image_dims: tuple[int, int],
    confidence_ok: bool = True,
) -> RegionMap:
    """Translate a star map so its centroid sits on the keypoint's grid cell.

    A missing or low-confidence keypoint falls back to the uncalibrated map
    with the centroid as anchor; the fallback is flagged, not fatal.
    """
    if not region.values.any():
        out = RegionMap(values=region.values.copy(), anchor=None, degenerate=True,
                        fallback=True, label=region.label)
        return out
    if keypoint is None or not confidence_ok:
        anchor = attention_centroid(region)
        return RegionMap(values=region.values.copy(), anchor=anchor,
                         fallback=True, label=region.label)
    cell = grid_cell(keypoint[0], keypoint[1], image_dims, (region.height, region.width))
    return translate_to(region, cell)


def resolve_anchor_point(
    rule: dict[str, float],
    keypoints: KeypointSet,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> tuple[float, float] | None:
    """Affine combination of keypoint pixels, or None when any is missing."""
    x = 0.0
    y = 0.0
    for name, weight in rule.items():
        pos = keypoints.get(name, confidence_floor)
        if pos is None:
            return None
        x += weight * pos[0]
        y += weight * pos[1]
    return x, y


def anchor_fleshy(
    region: RegionMap,
    table: AnchorTable,
    keypoints: KeypointSet,
    token: str,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> list[RegionMap]:
    """Anchor a volumetric token map at its skeleton-frame point(s).

    Tokens with per-side rules (Arms, Thigh, ...) produce one translated map
    per resolvable rule. When no rule resolves, the uncalibrated map is
    returned with its centroid as anchor, mirroring the star fallback.
    """
    if not region.values.any():
        return [RegionMap(values=region.values.copy(), anchor=None, degenerate=True,
                          fallback=True, label=region.label)]
    image_dims = (keypoints.image_width, keypoints.image_height)
    out: list[RegionMap] = []
    for idx, rule in enumerate(table.rules_for(token)):
        point = resolve_anchor_point(rule, keypoints, confidence_floor)
        if point is None:
            continue
        cell = grid_cell(point[0], point[1], image_dims, (region.height, region.width))
        shifted = translate_to(region, cell)
        shifted.label = f"{region.label}@{idx}" if region.label else f"{token}@{idx}"
        out.append(shifted)
    if not out:
        anchor = attention_centroid(region)
        out.append(RegionMap(values=region.values.copy(), anchor=anchor,
                             fallback=True, label=region.label))
    return out


def radial_constrain(region: RegionMap, center: tuple[int, int], radius: float) -> RegionMap:
    """Zero every cell farther than ``radius`` from ``center``.

    Distances compare squared against radius squared, which is equivalent for
    a non-negative radius and keeps the support test exact on the grid.
    """
    if radius <= 0:
        raise ParamError("radius must be positive")
    h, w = region.values.shape
    if not (0 <= center[0] < h and 0 <= center[1] < w):
        raise ParamError(f"center {center} outside {h}x{w} grid")
    ii, jj = np.ogrid[0:h, 0:w]
    dist2 = (ii - center[0]) ** 2 + (jj - center[1]) ** 2
    keep = dist2 <= radius * radius
    return RegionMap(values=np.where(keep, region.values, 0.0), anchor=center,
                     radius=radius, fallback=region.fallback, label=region.label)


def choose_radius(
    keypoint_name: str,
    keypoints: KeypointSet,
    mode: str = "average",
    grid_dims: tuple[int, int] = (16, 16),
    default_radius: float = DEFAULT_RADIUS,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> float:
    """Radius from grid-scaled bone lengths to skeleton-adjacent keypoints.

    mode selects min, average, or max over the adjacent bones. With no
    resolvable bone the default radius applies.
    """
    if mode not in ("min", "average", "max"):
        raise ParamError(f"unknown radius mode {mode!r}")
    own = keypoints.get(keypoint_name, confidence_floor)
    if own is None:
        return default_radius
    sx = grid_dims[1] / keypoints.image_width
    sy = grid_dims[0] / keypoints.image_height
    lengths = []
    for neighbor in SKELETON_ADJACENCY.get(keypoint_name, ()):
        pos = keypoints.get(neighbor, confidence_floor)
        if pos is None:
            continue
        dx = (pos[0] - own[0]) * sx
        dy = (pos[1] - own[1]) * sy
        lengths.append(math.hypot(dx, dy))
    if not lengths:
        return default_radius
    if mode == "min":
        return min(lengths)
    if mode == "max":
        return max(lengths)
    return sum(lengths) / len(lengths)


def radius_for_point(
    point: tuple[float, float],
    reference_names: list[str],
    keypoints: KeypointSet,
    mode: str = "average",
    grid_dims: tuple[int, int] = (16, 16),
    default_radius: float = DEFAULT_RADIUS,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> float:
    """Radius for an anchor point measured to its rule's reference keypoints.

    Used for fleshy tokens, which have no skeleton node of their own.
    """
    if mode not in ("min", "average", "max"):
        raise ParamError(f"unknown radius mode {mode!r}")
    sx = grid_dims[1] / keypoints.image_width
    sy = grid_dims[0] / keypoints.image_height
    lengths = []
    for name in reference_names:
        pos = keypoints.get(name, confidence_floor)
        if pos is None:
            continue
        dx = (pos[0] - point[0]) * sx
        dy = (pos[1] - point[1]) * sy
        length = math.hypot(dx, dy)
        if length > 0:
            lengths.append(length)
    if not lengths:
        return default_radius
    if mode == "min":
        return min(lengths)
    if mode == "max":
        return max(lengths)
    return sum(lengths) / len(lengths)
