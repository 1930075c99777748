"""Edge map to binary mask: bridging, boundary-propagation fill, smoothing.

The fill marks everything reachable from the image border through non-edge
pixels (4-connectivity) as exterior; whatever remains, plus the edges, is
foreground. Bridging closes small gaps between curve endpoints beforehand so
nearly-closed contours fill as intended.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.interpolate import splev, splprep

from .rasterops import (
    bilinear_upsample,
    bresenham_line,
    disk_footprint,
    fill_polygon,
    flood_reachable,
    separable_gaussian,
    trace_outer_contour,
)

DEFAULT_MAX_GAP_FRAC = 0.05
DEFAULT_SPLINE_SMOOTHING = 2.0
DEFAULT_MIN_AREA_FRAC = 0.001


@dataclass
class BinaryMask:
    """Full-resolution binary mask."""

    data: np.ndarray  # (height, width) bool

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def area(self) -> int:
        return int(self.data.sum())


def _edge_endpoints(edges: np.ndarray) -> list[tuple[int, int]]:
    """Edge pixels with at most one 8-connected edge neighbor."""
    e = edges.astype(np.int32)
    neighbor_count = np.zeros_like(e)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            shifted = np.zeros_like(e)
            src_i = slice(max(0, -di), e.shape[0] - max(0, di))
            src_j = slice(max(0, -dj), e.shape[1] - max(0, dj))
            dst_i = slice(max(0, di), e.shape[0] - max(0, -di))
            dst_j = slice(max(0, dj), e.shape[1] - max(0, -dj))
            shifted[dst_i, dst_j] = e[src_i, src_j]
            neighbor_count += shifted
    mask = edges & (neighbor_count <= 1)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(mask))]


def bridge_endpoints(edges: np.ndarray, max_gap: float | None = None) -> np.ndarray:
    """Connect nearby open curve endpoints with straight pixel runs.

    Endpoint pairs are closed greedily, nearest pair first, until no two
    endpoints sit within the gap limit (default 5% of the image diagonal).
    Already-adjacent endpoints are left alone.
    """
    edges = np.asarray(edges, dtype=bool)
    h, w = edges.shape
    if max_gap is None:
        max_gap = DEFAULT_MAX_GAP_FRAC * math.hypot(h, w)
    out = edges.copy()
    for _ in range(64):  # passes repeat until an entire pass draws nothing
        drew = _bridge_endpoint_pairs(out, max_gap)
        drew = _bridge_open_ends(out, max_gap) or drew
        if not drew:
            break
    return out


def _bridge_endpoint_pairs(out: np.ndarray, max_gap: float) -> bool:
    """Greedy endpoint matching, closest pair first; skip no-op chords."""
    endpoints = _edge_endpoints(out)
    if len(endpoints) < 2:
        return False
    pts = np.array(endpoints, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    upper_a, upper_b = np.triu_indices(len(endpoints), k=1)
    order = np.argsort(dist[upper_a, upper_b], kind="stable")
    consumed: set[int] = set()
    drew = False
    for idx in order:
        a, b = int(upper_a[idx]), int(upper_b[idx])
        gap = dist[a, b]
        if gap > max_gap:
            break
        if gap <= math.sqrt(2.0) or a in consumed or b in consumed:
            continue
        line = bresenham_line(*endpoints[a], *endpoints[b])
        new_px = [(i, j) for i, j in line if not out[i, j]]
        if not new_px:
            continue  # tips of one straight run, nothing to close
        for i, j in new_px:
            out[i, j] = True
        consumed.add(a)
        consumed.add(b)
        drew = True
    return drew


def _geodesic_distances(edges: np.ndarray, start: tuple[int, int], cap: int) -> dict[tuple[int, int], int]:
    """BFS distances along the edge graph (8-connected), truncated at cap."""
    from collections import deque

    h, w = edges.shape
    dist = {start: 0}
    queue = deque([start])
    while queue:
        i, j = queue.popleft()
        d = dist[(i, j)]
        if d >= cap:
            continue
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ni, nj = i + di, j + dj
                if (di or dj) and 0 <= ni < h and 0 <= nj < w and edges[ni, nj] and (ni, nj) not in dist:
                    dist[(ni, nj)] = d + 1
                    queue.append((ni, nj))
    return dist


def _bridge_open_ends(out: np.ndarray, max_gap: float) -> bool:
    """Connect leftover open ends across genuine curve mouths.

    An open end may face the middle of another arc rather than an endpoint.
    A target pixel qualifies when it is Euclidean-near but far (or
    unreachable) along the curve graph, so smooth curve interiors are never
    short-circuited.
    """
    endpoints = _edge_endpoints(out)
    if not endpoints:
        return False
    edge_px = np.argwhere(out)
    cap = int(math.ceil(2.5 * max_gap)) + 2
    drew = False
    for i, j in endpoints:
        if not out[i, j]:
            continue
        d2 = (edge_px[:, 0] - i) ** 2 + (edge_px[:, 1] - j) ** 2
        in_reach = np.nonzero((d2 > 2) & (d2 <= max_gap * max_gap))[0]
        if in_reach.size == 0:
            continue
        local = _geodesic_distances(out, (i, j), cap)
        best = None
        best_d2 = None
        for k in in_reach:
            ti, tj = int(edge_px[k, 0]), int(edge_px[k, 1])
            geo = local.get((ti, tj))
            euclid = math.sqrt(float(d2[k]))
            if geo is not None and geo <= 2.5 * euclid + 2:
                continue  # just the continuation of this curve
            if best_d2 is None or d2[k] < best_d2:
                best = (ti, tj)
                best_d2 = d2[k]
        if best is None:
            continue
        new_px = [(pi, pj) for pi, pj in bresenham_line(i, j, *best) if not out[pi, pj]]
        if not new_px:
            continue
        for pi, pj in new_px:
            out[pi, pj] = True
        drew = True
    return drew


def edge_to_mask(edges: np.ndarray) -> tuple[BinaryMask, int]:
    """Boundary-propagation fill of an edge image.

    Non-edge pixels reachable from the border become exterior; the rest,
    together with the edges themselves, are foreground. Returns the mask and
    a visit counter (each pixel is visited at most once).
    """
    edges = np.asarray(edges, dtype=bool)
    h, w = edges.shape
    non_edge = ~edges
    seeds = np.zeros((h, w), dtype=bool)
    seeds[0, :] = True
    seeds[-1, :] = True
    seeds[:, 0] = True
    seeds[:, -1] = True
    exterior, visits = flood_reachable(seeds & non_edge, non_edge, connectivity=4)
    return BinaryMask(data=~exterior), visits


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep only the largest 4-connected foreground component."""
    labeled, count = ndimage.label(mask, structure=ndimage.generate_binary_structure(2, 1))
    if count <= 1:
        return np.asarray(mask, dtype=bool)
    sizes = ndimage.sum_labels(np.ones_like(labeled), labeled, index=np.arange(1, count + 1))
    return labeled == (int(np.argmax(sizes)) + 1)


def _spline_smooth_contour(contour: list[tuple[int, int]], smoothing: float, height: int, width: int) -> np.ndarray | None:
    """Fit a periodic cubic spline through the contour and refill it."""
    if len(contour) < 8:
        return None
    pts = np.array(contour[:-1] if contour[0] == contour[-1] else contour, dtype=np.float64)
    # Collapse duplicate consecutive samples; splprep rejects zero-length steps.
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = (np.abs(np.diff(pts, axis=0)).sum(axis=1) > 0)
    pts = pts[keep]
    if len(pts) < 8:
        return None
    try:
        tck, _ = splprep([pts[:, 0], pts[:, 1]], s=smoothing * len(pts), per=True, k=3)
    except (ValueError, TypeError):
        return None
    u = np.linspace(0.0, 1.0, max(64, 4 * len(pts)), endpoint=False)
    si, sj = splev(u, tck)
    return fill_polygon(list(zip(si, sj)), height, width)


def smooth_mask(
    mask: BinaryMask,
    dilation_radius: int = 2,
    blur_sigma: float = 1.5,
    spline_smoothing: float = DEFAULT_SPLINE_SMOOTHING,
) -> BinaryMask:
    """Dilate, blur-threshold, then refit the outer contour with a spline.

    Dilation pads the boundary outward, the Gaussian pass removes pixel
    staircase noise, and the closed spline refit evens out the remaining
    contour jitter. Empty masks come back empty.
    """
    fg = mask.data
    if not fg.any():
        return BinaryMask(data=fg.copy())
    dilated = ndimage.binary_dilation(fg, structure=disk_footprint(dilation_radius))
    blurred = separable_gaussian(dilated.astype(np.float64), blur_sigma) > 0.5
    if not blurred.any():
        blurred = dilated
    body = largest_component(blurred)
    contour = trace_outer_contour(body)
    refit = _spline_smooth_contour(contour, spline_smoothing, mask.height, mask.width)
    if refit is None or not refit.any():
        return BinaryMask(data=body)
    return BinaryMask(data=refit | _interior_only(body, refit))


def _interior_only(body: np.ndarray, refit: np.ndarray) -> np.ndarray:
    """Guard against spline refits that clip thin necks: keep the refit but
    never drop interior pixels far from the boundary."""
    core = ndimage.binary_erosion(body, structure=disk_footprint(2))
    return core & ~refit


def rasterize_region(region: np.ndarray, height: int, width: int) -> np.ndarray:
    """Upsample a grid-resolution map's support to image resolution."""
    up = bilinear_upsample((np.asarray(region, dtype=np.float64) > 0).astype(np.float64), height, width)
    return up > 0.5


def finalize(
    edges: np.ndarray,
    fallback_region: np.ndarray,
    max_gap: float | None = None,
    spline_smoothing: float = DEFAULT_SPLINE_SMOOTHING,
    min_area_frac: float = DEFAULT_MIN_AREA_FRAC,
    multi_region: bool = False,
    region_agreement: float = 0.3,
) -> tuple[BinaryMask, dict]:
    """Bridge, fill, select, and smooth; fall back to the fused region's
    support when the edge route fails.

    The edge route refines the fused region's boundary; it cannot replace
    the region wholesale. When the filled result is tiny or disagrees with
    the region support (overlap below ``region_agreement``), the support
    itself is rasterized instead. Returns the mask plus a small stats dict
    (visits, fallback flag).
    """
    edges = np.asarray(edges, dtype=bool)
    h, w = edges.shape
    bridged = bridge_endpoints(edges, max_gap)
    filled, visits = edge_to_mask(bridged)
    fg = filled.data
    if not multi_region:
        fg = largest_component(fg)
    info = {"visits": visits, "fallback": False}
    support = rasterize_region(fallback_region, h, w)
    union = np.logical_or(fg, support).sum()
    overlap = np.logical_and(fg, support).sum() / union if union else 1.0
    if fg.sum() < min_area_frac * h * w or overlap < region_agreement:
        info["fallback"] = True
        fg = support
        if not fg.any():
            return BinaryMask(data=np.zeros((h, w), dtype=bool)), info
    smoothed = smooth_mask(BinaryMask(data=fg), spline_smoothing=spline_smoothing)
    if not smoothed.data.any():
        smoothed = BinaryMask(data=fg)
    return smoothed, info
