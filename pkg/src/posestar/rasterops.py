"""Low-level raster helpers shared by the pipeline stages.

Everything here is pure and operates on plain numpy arrays indexed as
(row, col). Coordinates follow the same convention throughout: ``i`` is the
row (y) and ``j`` is the column (x).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

FOUR_NEIGHBORS = ((-1, 0), (1, 0), (0, -1), (0, 1))
EIGHT_NEIGHBORS = tuple(
    (di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)
)


def shift_2d(values: np.ndarray, di: int, dj: int) -> np.ndarray:
    """Translate a 2-D array by whole cells, zero-filling vacated cells."""
    out = np.zeros_like(values)
    h, w = values.shape
    src_i = slice(max(0, -di), min(h, h - di))
    src_j = slice(max(0, -dj), min(w, w - dj))
    dst_i = slice(max(0, di), min(h, h + di))
    dst_j = slice(max(0, dj), min(w, w + dj))
    if src_i.start < src_i.stop and src_j.start < src_j.stop:
        out[dst_i, dst_j] = values[src_i, src_j]
    return out


def bilinear_upsample(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Center-aligned bilinear resampling to (out_h, out_w).

    Output pixel centers map to input coordinates via
    ``src = (dst + 0.5) * in/out - 0.5`` with edge clamping, so a constant
    input stays exactly constant.
    """
    if values.ndim != 2:
        raise ShapeError(f"expected 2-D map, got shape {values.shape}")
    in_h, in_w = values.shape
    vals = np.asarray(values, dtype=np.float64)

    def axis_coords(out_n: int, in_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        src = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
        lo = np.clip(np.floor(src), 0, in_n - 1).astype(np.int64)
        hi = np.minimum(lo + 1, in_n - 1)
        frac = np.clip(src - lo, 0.0, 1.0)
        return lo, hi, frac

    i_lo, i_hi, fi = axis_coords(out_h, in_h)
    j_lo, j_hi, fj = axis_coords(out_w, in_w)
    fi = fi[:, None]
    fj = fj[None, :]
    top = vals[np.ix_(i_lo, j_lo)] * (1 - fj) + vals[np.ix_(i_lo, j_hi)] * fj
    bot = vals[np.ix_(i_hi, j_lo)] * (1 - fj) + vals[np.ix_(i_hi, j_hi)] * fj
    out = top * (1 - fi) + bot * fi
    return np.clip(out, 0.0, vals.max(initial=0.0))


def flood_reachable(seeds: np.ndarray, allowed: np.ndarray, connectivity: int = 4) -> tuple[np.ndarray, int]:
    """Breadth-first reachability over ``allowed`` cells starting from ``seeds``.

    The frontier is expanded one level per iteration, so every cell is
    visited exactly once. Returns (reached mask, number of visited cells).
    """
    if seeds.shape != allowed.shape:
        raise ShapeError("seeds and allowed masks must share a shape")
    neighbors = FOUR_NEIGHBORS if connectivity == 4 else EIGHT_NEIGHBORS
    reached = np.logical_and(seeds, allowed)
    visits = int(reached.sum())
    frontier = reached.copy()
    while frontier.any():
        grown = np.zeros_like(frontier)
        for di, dj in neighbors:
            grown |= shift_2d(frontier, di, dj)
        frontier = grown & allowed & ~reached
        reached |= frontier
        visits += int(frontier.sum())
    return reached, visits


def bresenham_line(i0: int, j0: int, i1: int, j1: int) -> list[tuple[int, int]]:
    """Integer line from (i0, j0) to (i1, j1), endpoints included."""
    points = []
    di = abs(i1 - i0)
    dj = abs(j1 - j0)
    si = 1 if i0 < i1 else -1
    sj = 1 if j0 < j1 else -1
    err = dj - di
    i, j = i0, j0
    while True:
        points.append((i, j))
        if i == i1 and j == j1:
            break
        e2 = 2 * err
        if e2 >= -di:
            err -= di
            j += sj
        if e2 <= dj:
            err += dj
            i += si
    return points


def disk_offsets(radius: int) -> list[tuple[int, int]]:
    """Offsets of the closed disk of the given integer radius."""
    r2 = radius * radius
    return [
        (di, dj)
        for di in range(-radius, radius + 1)
        for dj in range(-radius, radius + 1)
        if di * di + dj * dj <= r2
    ]


def disk_footprint(radius: int) -> np.ndarray:
    """Boolean structuring element for a closed disk."""
    side = 2 * radius + 1
    fp = np.zeros((side, side), dtype=bool)
    for di, dj in disk_offsets(radius):
        fp[di + radius, dj + radius] = True
    return fp


def separable_gaussian(values: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur with a truncated (3 sigma) separable kernel."""
    if sigma <= 0:
        return np.asarray(values, dtype=np.float64).copy()
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x * x) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    padded = np.pad(np.asarray(values, dtype=np.float64), radius, mode="reflect")
    out = np.apply_along_axis(lambda row: np.convolve(row, kernel, mode="valid"), 1, padded)
    out = np.apply_along_axis(lambda col: np.convolve(col, kernel, mode="valid"), 0, out)
    return out


def trace_outer_contour(mask: np.ndarray) -> list[tuple[int, int]]:
    """Moore-neighbor tracing of the outer contour of the foreground.

    Returns the closed boundary walk (first point repeated at the end when
    the region has more than one boundary pixel). Empty input gives [].
    """
    fg = np.asarray(mask, dtype=bool)
    if not fg.any():
        return []
    rows, cols = np.nonzero(fg)
    start = (int(rows[0]), int(cols[0]))
    # Scan order guarantees the cell above the start is background.
    order = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
    h, w = fg.shape

    def at(p: tuple[int, int]) -> bool:
        return 0 <= p[0] < h and 0 <= p[1] < w and fg[p]

    contour = [start]
    prev_dir = 0
    cur = start
    while True:
        found = False
        for step in range(8):
            k = (prev_dir + 5 + step) % 8  # backtrack + clockwise sweep
            di, dj = order[k]
            cand = (cur[0] + di, cur[1] + dj)
            if at(cand):
                contour.append(cand)
                prev_dir = k
                cur = cand
                found = True
                break
        if not found:
            break  # isolated pixel
        if cur == start and len(contour) > 2:
            break
        if len(contour) > 4 * h * w:
            break  # safety net, cannot happen on sane masks
    return contour


def fill_polygon(points: list[tuple[float, float]], height: int, width: int) -> np.ndarray:
    """Even-odd scanline fill of a closed polygon given as (i, j) vertices."""
    mask = np.zeros((height, width), dtype=bool)
    n = len(points)
    if n < 3:
        return mask
    ys = np.array([p[0] for p in points], dtype=np.float64)
    xs = np.array([p[1] for p in points], dtype=np.float64)
    ys_next = np.roll(ys, -1)
    xs_next = np.roll(xs, -1)
    for i in range(height):
        yc = i + 0.0
        cond = (ys <= yc) != (ys_next <= yc)
        if not cond.any():
            continue
        t = (yc - ys[cond]) / (ys_next[cond] - ys[cond])
        crossings = np.sort(xs[cond] + t * (xs_next[cond] - xs[cond]))
        for a, b in zip(crossings[0::2], crossings[1::2]):
            j0 = int(np.ceil(a))
            j1 = int(np.floor(b))
            if j1 >= j0:
                mask[i, max(0, j0): min(width, j1 + 1)] = True
    return mask
