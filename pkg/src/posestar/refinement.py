"""Boundary refinement: cross/self attention merge and edge-aware selection.

The merge averages an upsampled fine target map with its self-attention
counterpart after masking the latter by the former's support, then cuts at a
confidence threshold. The edge selector keeps only those Canny edges of the
source image that run close to the fused region's boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyRegionError, ParamError, ShapeError
from .rasterops import bilinear_upsample, flood_reachable, separable_gaussian
from .tensorio import ImageBuffer


@dataclass
class FusedRegion:
    """Thresholded cross/self average for one fine-map lane."""

    values: np.ndarray  # (32, 32) float64, nonzero values > alpha
    index: int


def upsample_fine(fine_map: np.ndarray, out_h: int = 32, out_w: int = 32) -> np.ndarray:
    """Bilinear upsample of one fine target map, clamped to [0, input max]."""
    return bilinear_upsample(np.asarray(fine_map, dtype=np.float64), out_h, out_w)


def cross_self_merge(cross_map: np.ndarray, self_map: np.ndarray, alpha: float = 0.4, index: int = 0) -> FusedRegion:
    """Average cross- and self-attention pixel-wise, then cut at alpha.

    The self map is first masked by the cross map's support so regions the
    cross-attention never touched cannot survive on self-attention alone.
    """
    if not (0.0 < alpha < 1.0):
        raise ParamError(f"alpha {alpha} outside (0, 1)")
    cross = np.asarray(cross_map, dtype=np.float64)
    selfm = np.asarray(self_map, dtype=np.float64)
    if cross.shape != selfm.shape:
        raise ShapeError(f"cross {cross.shape} vs self {selfm.shape}")
    masked_self = np.where(cross > 0.0, selfm, 0.0)
    fused = (cross + masked_self) / 2.0
    return FusedRegion(values=np.where(fused > alpha, fused, 0.0), index=index)


def combine_regions(regions: list[FusedRegion], mode: str = "max") -> np.ndarray:
    """Collapse the per-lane fused regions into a single map.

    max: pixel-wise maximum (union of supports). mean: pixel-wise mean.
    best: the single region with the highest mean confidence over its support.
    """
    if not regions:
        raise ParamError("no regions to combine")
    stack = np.stack([r.values for r in regions])
    if mode == "max":
        return stack.max(axis=0)
    if mode == "mean":
        return stack.mean(axis=0)
    if mode == "best":
        def support_mean(vals: np.ndarray) -> float:
            nz = vals[vals > 0]
            return float(nz.mean()) if nz.size else 0.0

        return max(regions, key=lambda r: support_mean(r.values)).values.copy()
    raise ParamError(f"unknown combine mode {mode!r}")


def _sobel(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(gray)
    gy = np.zeros_like(gray)
    p = np.pad(gray, 1, mode="edge")
    # 3x3 Sobel as explicit shifts; rows are i, cols are j.
    gx[:, :] = (
        (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy[:, :] = (
        (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return gx, gy


def _nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep only pixels that are local maxima along the gradient direction."""
    h, w = mag.shape
    angle = np.degrees(np.arctan2(gy, gx))
    angle[angle < 0] += 180.0
    padded = np.pad(mag, 1, mode="constant")
    center = padded[1:-1, 1:-1]

    def neighbor(di: int, dj: int) -> np.ndarray:
        return padded[1 + di: 1 + di + h, 1 + dj: 1 + dj + w]

    sector_e = (angle < 22.5) | (angle >= 157.5)
    sector_ne = (angle >= 22.5) & (angle < 67.5)
    sector_n = (angle >= 67.5) & (angle < 112.5)
    sector_nw = (angle >= 112.5) & (angle < 157.5)
    q = np.where(sector_e, neighbor(0, 1), 0.0)
    r = np.where(sector_e, neighbor(0, -1), 0.0)
    q = np.where(sector_ne, neighbor(1, -1), q)
    r = np.where(sector_ne, neighbor(-1, 1), r)
    q = np.where(sector_n, neighbor(1, 0), q)
    r = np.where(sector_n, neighbor(-1, 0), r)
    q = np.where(sector_nw, neighbor(-1, -1), q)
    r = np.where(sector_nw, neighbor(1, 1), r)
    return np.where((center >= q) & (center >= r), center, 0.0)


def canny_edges(image: ImageBuffer, low: float = 50.0, high: float = 150.0, sigma: float = 1.4) -> np.ndarray:
    """Classic Canny: blur, Sobel gradients, non-max suppression, hysteresis.

    Thresholds compare against the raw Sobel gradient magnitude of the 8-bit
    image (the usual convention for 50/150-style defaults).
    """
    gray = image.to_gray()
    blurred = separable_gaussian(gray, sigma)
    gx, gy = _sobel(blurred)
    mag = np.hypot(gx, gy)
    if mag.max() <= 0:
        return np.zeros(gray.shape, dtype=bool)
    thin = _nonmax_suppress(mag, gx, gy)
    strong = thin >= high
    weak = thin >= low
    # Strong edges seed a flood over weak edges (8-connected hysteresis).
    edges, _ = flood_reachable(strong, weak, connectivity=8)
    return edges


def region_support(region: np.ndarray, image_dims: tuple[int, int], alpha: float = 0.4) -> np.ndarray:
    """Fused region upsampled to image resolution, thresholded to a support mask."""
    img_w, img_h = image_dims
    up = bilinear_upsample(np.asarray(region, dtype=np.float64), img_h, img_w)
    return up > 0.5 * alpha


def edge_select(
    edges: np.ndarray,
    region: np.ndarray,
    mu: float,
    image_dims: tuple[int, int],
    alpha: float = 0.4,
    literal_center: bool = False,
) -> np.ndarray:
    """Keep edges geometrically consistent with the fused region.

    Default reading: keep edge pixels lying on the region support or within
    ``mu * l`` of its boundary, where l is the support's maximum
    inscribed-disk radius. Interior edges count as consistent because the
    attention support over-covers the target at grid resolution, so the true
    contour usually runs inside it. The boundary band never drops below two
    region-grid cells in image pixels, the quantization limit below which
    the boundary position carries no information. The literal-center variant
    keeps edges inside a disk of radius ``mu * l_c`` around the support
    centroid, with l_c the centroid's distance to the boundary.
    """
    if not (0.0 < mu <= 1.0):
        raise ParamError(f"mu {mu} outside (0, 1]")
    edges = np.asarray(edges, dtype=bool)
    support = region_support(region, image_dims, alpha)
    if edges.shape != support.shape:
        raise ShapeError(f"edges {edges.shape} vs support {support.shape}")
    if not support.any():
        raise EmptyRegionError("region support is empty")

    inner = ndimage.binary_erosion(support, structure=ndimage.generate_binary_structure(2, 1))
    boundary = support & ~inner
    if not boundary.any():
        # Support fills the frame; nothing constrains the edges.
        return edges.copy()

    if literal_center:
        inscribed = ndimage.distance_transform_edt(support)
        rows, cols = np.nonzero(support)
        ci = int(round(rows.mean()))
        cj = int(round(cols.mean()))
        l_center = float(inscribed[min(max(ci, 0), support.shape[0] - 1), min(max(cj, 0), support.shape[1] - 1)])
        ii, jj = np.ogrid[0: edges.shape[0], 0: edges.shape[1]]
        dist2 = (ii - ci) ** 2 + (jj - cj) ** 2
        keep = dist2 <= (mu * l_center) ** 2
        return edges & keep

    dist_to_boundary = ndimage.distance_transform_edt(~boundary)
    inscribed_radius = float(ndimage.distance_transform_edt(support).max())
    cell_px = 2.0 * edges.shape[0] / np.asarray(region).shape[0]
    band = dist_to_boundary <= max(mu * inscribed_radius, cell_px)
    return edges & (band | support)
