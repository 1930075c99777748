"""Cross-step fusion of calibrated token maps into fine target maps.

Two stages: per-step threshold-gated averaging across tokens, then a
step-weighted sliding-window consensus over the step grid. Accumulation
order is fixed (ascending token index, window offsets row-major) so results
are bit-reproducible and directly comparable against naive reference
evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParamError, ShapeError


@dataclass
class CoarseTargetStack:
    """Per-step fused map, shape (steps, height, width)."""

    data: np.ndarray

    @property
    def steps(self) -> int:
        return self.data.shape[0]


@dataclass
class FineTargetStack:
    """Consensus maps after window fusion and column collapse, (maps, h, w)."""

    data: np.ndarray

    @property
    def count(self) -> int:
        return self.data.shape[0]


@dataclass
class PhaseWeights:
    """Strictly increasing per-step weights, normalized to sum to 1.

    Construction normalizes whatever raw positive ramp it is given, so any
    positive rescaling of the input yields the same stored weights and
    therefore the same downstream consensus.
    """

    w: np.ndarray

    def __init__(self, raw: np.ndarray) -> None:
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 1 or raw.size < 1:
            raise ParamError("weights must be a non-empty 1-D array")
        if (raw <= 0).any():
            raise ParamError("weights must be strictly positive")
        if raw.size > 1 and not (np.diff(raw) > 0).all():
            raise ParamError("weights must be strictly increasing")
        self.w = raw / raw.sum()

    def __len__(self) -> int:
        return self.w.size


def phase_weights(steps: int) -> PhaseWeights:
    """Linear ramp favoring later steps: weight of step t proportional to t."""
    if steps < 1:
        raise ParamError("steps must be >= 1")
    return PhaseWeights(np.arange(1, steps + 1, dtype=np.float64))


def thresholded_average(maps_at_t: np.ndarray, beta: float) -> np.ndarray:
    """Mean over the maps that clear ``beta`` at each pixel.

    Pixels where no map clears the threshold are 0 (the division is
    undefined there; zero matches the noise-suppression intent).
    """
    if not (0.0 < beta < 1.0):
        raise ParamError(f"beta {beta} outside (0, 1)")
    maps_at_t = np.asarray(maps_at_t, dtype=np.float64)
    if maps_at_t.ndim != 3 or maps_at_t.shape[0] < 1:
        raise ShapeError(f"expected (tokens, h, w), got {maps_at_t.shape}")
    total = np.zeros(maps_at_t.shape[1:], dtype=np.float64)
    count = np.zeros(maps_at_t.shape[1:], dtype=np.int64)
    for n in range(maps_at_t.shape[0]):  # fixed order keeps sums reproducible
        keep = maps_at_t[n] > beta
        total += np.where(keep, maps_at_t[n], 0.0)
        count += keep
    with np.errstate(invalid="ignore"):
        out = np.where(count > 0, total / np.maximum(count, 1), 0.0)
    return out


def build_coarse_stack(calibrated: np.ndarray, beta: float = 0.3) -> CoarseTargetStack:
    """Apply thresholded averaging at every step of a (T, N, h, w) tensor."""
    calibrated = np.asarray(calibrated, dtype=np.float64)
    if calibrated.ndim != 4:
        raise ShapeError(f"expected (steps, tokens, h, w), got {calibrated.shape}")
    coarse = np.stack([thresholded_average(calibrated[t], beta) for t in range(calibrated.shape[0])])
    return CoarseTargetStack(data=coarse)


def sliding_window_consensus(
    coarse: CoarseTargetStack,
    weights: PhaseWeights,
    window: int = 3,
) -> np.ndarray:
    """Weighted window consensus over the square step grid.

    The T steps reshape row-major to a G x G grid (step t sits at
    (t // G, t % G)); each output cell is the weight-normalized average of
    the window x window block of maps anchored there (no padding). Output
    shape: (G - window + 1, G - window + 1, h, w).
    """
    steps = coarse.steps
    grid = int(round(steps ** 0.5))
    if grid * grid != steps:
        raise ShapeError(f"step count {steps} is not a perfect square")
    if not (1 <= window <= grid):
        raise ParamError(f"window {window} outside 1..{grid}")
    if len(weights) != steps:
        raise ShapeError("weight count does not match step count")
    h, w = coarse.data.shape[1:]
    maps = coarse.data.reshape(grid, grid, h, w)
    wgrid = weights.w.reshape(grid, grid)
    side = grid - window + 1
    num = np.zeros((side, side, h, w), dtype=np.float64)
    den = np.zeros((side, side), dtype=np.float64)
    for dm in range(window):  # row-major offset order, fixed for reproducibility
        for dn in range(window):
            block_w = wgrid[dm: dm + side, dn: dn + side]
            num += maps[dm: dm + side, dn: dn + side] * block_w[..., None, None]
            den += block_w
    return num / den[..., None, None]


def collapse_to_fine(window_grid: np.ndarray, axis: str = "row") -> FineTargetStack:
    """Average the window grid along one grid axis, one fine map per lane.

    axis="row" collapses the first grid axis (one map per window column,
    the default); axis="col" collapses the second.
    """
    if window_grid.ndim != 4:
        raise ShapeError(f"expected (rows, cols, h, w), got {window_grid.shape}")
    if axis == "row":
        fine = window_grid.mean(axis=0)
    elif axis == "col":
        fine = window_grid.mean(axis=1)
    else:
        raise ParamError(f"unknown collapse axis {axis!r}")
    return FineTargetStack(data=fine)
