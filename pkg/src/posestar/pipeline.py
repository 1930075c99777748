"""End-to-end orchestration: instruction to final binary mask.

Stages: token matching, per-step pose calibration, threshold-gated token
fusion, step-window consensus, cross/self merge, edge-aware selection, and
mask post-processing. The run is deterministic: identical inputs and config
produce bit-identical masks.
"""

from __future__ import annotations

import csv
import itertools
import json
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import aggregation, localization, maskpost, refinement
from .errors import EmptyRegionError, NoTokensError, ParamError, ShapeError
from .instruction import TokenGroup, instruction_to_group
from .localization import (
    AnchorTable,
    RegionMap,
    STAR_KEYPOINTS,
    calibrate_star,
    translate_local_mode,
    choose_radius,
    normalize_map,
    radial_constrain,
    radius_for_point,
    resolve_anchor_point,
)
from .maskpost import BinaryMask
from .tensorio import (
    AttentionStack,
    ImageBuffer,
    KeypointSet,
    SelfAttentionStack,
    write_mask_png,
)


@dataclass
class PipelineConfig:
    beta: float = 0.3
    alpha: float = 0.4
    mu: float = 0.1
    r_mode: str = "average"
    window: int = 3
    steps: int = 100
    combine_mode: str = "max"
    collapse_axis: str = "row"
    canny_low: float = 50.0
    canny_high: float = 150.0
    canny_sigma: float = 1.4
    mu_literal: bool = False
    default_radius: float = 4.0
    confidence_floor: float = 0.1
    max_gap_frac: float = maskpost.DEFAULT_MAX_GAP_FRAC
    spline_smoothing: float = maskpost.DEFAULT_SPLINE_SMOOTHING
    min_area_frac: float = maskpost.DEFAULT_MIN_AREA_FRAC
    multi_region: bool = False
    debug_dir: str | None = None

    def validate(self) -> None:
        if not (0.0 < self.beta < 1.0):
            raise ParamError(f"beta {self.beta} outside (0, 1)")
        if not (0.0 < self.alpha < 1.0):
            raise ParamError(f"alpha {self.alpha} outside (0, 1)")
        if not (0.0 < self.mu <= 1.0):
            raise ParamError(f"mu {self.mu} outside (0, 1]")
        if self.window not in (1, 2, 3, 4):
            raise ParamError(f"window {self.window} outside 1..4")
        if self.r_mode not in ("min", "average", "max"):
            raise ParamError(f"unknown r_mode {self.r_mode!r}")
        if self.combine_mode not in ("max", "mean", "best"):
            raise ParamError(f"unknown combine mode {self.combine_mode!r}")
        if self.collapse_axis not in ("row", "col", "both"):
            raise ParamError(f"unknown collapse axis {self.collapse_axis!r}")
        if self.steps < 1:
            raise ParamError("steps must be >= 1")
        if self.window > 1:
            grid = int(round(self.steps ** 0.5))
            if grid * grid != self.steps:
                raise ParamError(f"steps {self.steps} must be a perfect square for windowed fusion")


@dataclass
class RunReport:
    mask_path: str | None = None
    timings_ms: dict[str, float] = field(default_factory=dict)
    tokens_used: list[str] = field(default_factory=list)
    tokens_skipped: list[str] = field(default_factory=list)
    fallbacks: list[str] = field(default_factory=list)
    iou: float | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


class _Timer:
    def __init__(self, report: RunReport) -> None:
        self.report = report
        self.last = time.perf_counter()

    def lap(self, stage: str) -> None:
        now = time.perf_counter()
        self.report.timings_ms[stage] = round((now - self.last) * 1000.0, 3)
        self.last = now


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("POSESTAR_THREADS", "1")))
    except ValueError:
        return 1


def _map_parallel(fn, items: list):
    threads = _thread_count()
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def localize_stack(
    attn: AttentionStack,
    keypoints: KeypointSet,
    group: TokenGroup,
    config: PipelineConfig,
    anchor_table: AnchorTable | None = None,
    report: RunReport | None = None,
) -> np.ndarray:
    """Calibrate every step of every usable token map.

    Star tokens expand to one map instance per present body side; fleshy
    tokens to one instance per resolvable anchor rule; clothes tokens pass
    through untouched. Returns a (steps, instances, h, w) tensor.
    """
    table = anchor_table or localization.default_anchor_table()
    image_dims = (keypoints.image_width, keypoints.image_height)
    grid_dims = (attn.height, attn.width)
    report = report or RunReport()

    available = set(attn.token_names)
    plans = []  # (token, kind, side keypoint or rule info)
    for token in group.star_tokens:
        if token not in available:
            report.tokens_skipped.append(token)
            continue
        plans.append((token, "star"))
    for token in group.fleshy_tokens:
        if token not in available:
            report.tokens_skipped.append(token)
            continue
        plans.append((token, "fleshy"))
    for token in group.clothes_tokens:
        if token not in available:
            report.tokens_skipped.append(token)
            continue
        plans.append((token, "clothes"))
    if not plans:
        raise NoTokensError("attention stack covers none of the requested tokens")
    if report.tokens_skipped:
        warnings.warn(f"skipped tokens missing from the stack: {report.tokens_skipped}", stacklevel=2)

    def localize_token(plan: tuple[str, str]) -> list[np.ndarray]:
        token, kind = plan
        step_maps = attn.maps_for(token)
        columns: list[np.ndarray] = []
        if kind == "clothes":
            normalized = [normalize_map(RegionMap(values=step_maps[t].astype(np.float64), label=token)).values
                          for t in range(attn.steps)]
            columns.append(np.stack(normalized))
            report.tokens_used.append(token)
            return columns
        if kind == "star":
            for kp_name in STAR_KEYPOINTS[token]:
                point = keypoints.get(kp_name, config.confidence_floor)
                radius = choose_radius(kp_name, keypoints, config.r_mode, grid_dims,
                                       config.default_radius, config.confidence_floor)
                stack = np.zeros((attn.steps, attn.height, attn.width), dtype=np.float64)
                fell_back = False
                window = max(2.0 * radius, 3.0)
                for t in range(attn.steps):
                    region = normalize_map(RegionMap(values=step_maps[t].astype(np.float64), label=token))
                    if region.degenerate:
                        continue
                    if point is None:
                        placed = calibrate_star(region, None, image_dims)
                        fell_back = True
                    else:
                        cell = localization.grid_cell(point[0], point[1], image_dims, grid_dims)
                        placed = translate_local_mode(region, cell, window)
                    constrained = radial_constrain(placed, placed.anchor, radius)
                    stack[t] = constrained.values
                if fell_back:
                    report.fallbacks.append(f"{token}@{kp_name}")
                columns.append(stack)
                report.tokens_used.append(f"{token}@{kp_name}")
            return columns
        # fleshy: one instance per anchor rule
        rules = table.rules_for(token)
        resolved = []
        for rule in rules:
            point = resolve_anchor_point(rule, keypoints, config.confidence_floor)
            if point is not None:
                resolved.append((rule, point))
        if not resolved:
            resolved = [(None, None)]
            report.fallbacks.append(token)
        for idx, (rule, point) in enumerate(resolved):
            stack = np.zeros((attn.steps, attn.height, attn.width), dtype=np.float64)
            if point is not None:
                radius = radius_for_point(point, list(rule.keys()), keypoints, config.r_mode,
                                          grid_dims, config.default_radius, config.confidence_floor)
            else:
                radius = config.default_radius
            window = max(2.0 * radius, 3.0)
            for t in range(attn.steps):
                region = normalize_map(RegionMap(values=step_maps[t].astype(np.float64), label=token))
                if region.degenerate:
                    continue
                if point is None:
                    placed = calibrate_star(region, None, image_dims)  # fallback path
                else:
                    cell = localization.grid_cell(point[0], point[1], image_dims, grid_dims)
                    placed = translate_local_mode(region, cell, window)
                constrained = radial_constrain(placed, placed.anchor, radius)
                stack[t] = constrained.values
            columns.append(stack)
            report.tokens_used.append(f"{token}@{idx}" if len(resolved) > 1 else token)
        return columns

    results = _map_parallel(localize_token, plans)
    instances = [column for column_list in results for column in column_list]
    tensor = np.stack(instances, axis=1)
    if not (tensor > 0).any():
        raise NoTokensError("every usable token map is degenerate (all zero)")
    return tensor


def _pair_self_maps(fine_count: int, self_count: int) -> list[int]:
    """Index-proportional pairing of fine maps with self-attention maps."""
    if fine_count == 1:
        return [0]
    return [int(round(k * (self_count - 1) / (fine_count - 1))) for k in range(fine_count)]


def _save_heat(path: str, values: np.ndarray) -> None:
    from PIL import Image

    arr = np.asarray(values, dtype=np.float64)
    peak = arr.max(initial=0.0)
    if peak > 0:
        arr = arr / peak
    Image.fromarray((arr * 255).astype(np.uint8), mode="L").save(path)


def run(
    image: ImageBuffer,
    attn: AttentionStack,
    self_attn: SelfAttentionStack,
    keypoints: KeypointSet,
    instruction: str,
    config: PipelineConfig | None = None,
    ground_truth: np.ndarray | None = None,
    anchor_table: AnchorTable | None = None,
) -> tuple[BinaryMask, RunReport]:
    """Full mask synthesis for one instruction."""
    config = config or PipelineConfig()
    config.validate()
    if attn.steps != config.steps:
        config = replace(config, steps=attn.steps)
        config.validate()
    report = RunReport()
    timer = _Timer(report)

    group = instruction_to_group(instruction)
    timer.lap("instruction")

    calibrated = localize_stack(attn, keypoints, group, config, anchor_table, report)
    timer.lap("localization")

    coarse = aggregation.build_coarse_stack(calibrated, config.beta)
    weights = aggregation.phase_weights(config.steps)
    grid_side = int(round(config.steps ** 0.5))
    if grid_side * grid_side == config.steps:
        consensus = aggregation.sliding_window_consensus(coarse, weights, config.window)
    else:
        # Non-square step counts only pass validation with window 1, where
        # the consensus is per-map identity; arrange the steps as one row.
        consensus = coarse.data[None, ...]

    def merge_lanes(axis: str) -> np.ndarray:
        fine = aggregation.collapse_to_fine(consensus, axis)
        pairing = _pair_self_maps(fine.count, self_attn.maps)
        regions = []
        for k in range(fine.count):
            up = refinement.upsample_fine(fine.data[k], self_attn.height, self_attn.width)
            fused = refinement.cross_self_merge(up, self_attn.data[pairing[k]].astype(np.float64),
                                                config.alpha, index=k)
            regions.append(fused)
        return refinement.combine_regions(regions, config.combine_mode)

    timer.lap("aggregation")

    if config.collapse_axis == "both":
        # Conservative consensus of the two collapse readings: a pixel is
        # target only where both the within-decade and the time-band lanes
        # agree after thresholding.
        combined = np.minimum(merge_lanes("row"), merge_lanes("col"))
    else:
        combined = merge_lanes(config.collapse_axis)
    timer.lap("refinement")

    edges = refinement.canny_edges(image, config.canny_low, config.canny_high, config.canny_sigma)
    image_dims = (image.width, image.height)
    try:
        selected = refinement.edge_select(edges, combined, config.mu, image_dims,
                                          config.alpha, config.mu_literal)
    except EmptyRegionError:
        report.fallbacks.append("empty-region")
        selected = np.zeros((image.height, image.width), dtype=bool)
    timer.lap("edges")

    max_gap = config.max_gap_frac * float(np.hypot(image.height, image.width))
    mask, info = maskpost.finalize(
        selected, combined, max_gap=max_gap,
        spline_smoothing=config.spline_smoothing,
        min_area_frac=config.min_area_frac,
        multi_region=config.multi_region,
    )
    if info.get("fallback"):
        report.fallbacks.append("region-rasterize")
    timer.lap("maskpost")

    if ground_truth is not None:
        report.iou = iou(mask.data, ground_truth)

    if config.debug_dir:
        os.makedirs(config.debug_dir, exist_ok=True)
        dbg = config.debug_dir
        for t in (0, attn.steps // 2, attn.steps - 1):
            _save_heat(os.path.join(dbg, f"coarse_t{t:03d}.png"), coarse.data[t])
        mid = calibrated.shape[1] // 2
        _save_heat(os.path.join(dbg, "calibrated_sample.png"), calibrated[attn.steps // 2, mid])
        dbg_axis = "row" if config.collapse_axis == "both" else config.collapse_axis
        dbg_fine = aggregation.collapse_to_fine(consensus, dbg_axis)
        dbg_pairing = _pair_self_maps(dbg_fine.count, self_attn.maps)
        for k in range(dbg_fine.count):
            _save_heat(os.path.join(dbg, f"fine_{k}.png"), dbg_fine.data[k])
            up = refinement.upsample_fine(dbg_fine.data[k], self_attn.height, self_attn.width)
            fused = refinement.cross_self_merge(up, self_attn.data[dbg_pairing[k]].astype(np.float64),
                                                config.alpha, index=k)
            _save_heat(os.path.join(dbg, f"region_{k}.png"), fused.values)
        _save_heat(os.path.join(dbg, "combined.png"), combined)
        write_mask_png(edges, os.path.join(dbg, "canny.png"))
        write_mask_png(selected, os.path.join(dbg, "edges_selected.png"))
        write_mask_png(mask.data, os.path.join(dbg, "mask_final.png"))
        timer.lap("debug")

    return mask, report


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; 1.0 when both empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return inter / union


@dataclass
class Fixture:
    """One on-disk evaluation case."""

    image: ImageBuffer
    attn: AttentionStack
    self_attn: SelfAttentionStack
    keypoints: KeypointSet
    instruction: str
    ground_truth: np.ndarray
    name: str = ""


def load_fixture(path: str) -> Fixture:
    from .tensorio import read_attention_stack, read_image, read_keypoints, read_mask_png, read_self_attention_stack

    with open(os.path.join(path, "fixture.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    instruction = manifest["instruction"]
    gt_name = manifest["ground_truth"][instruction]
    return Fixture(
        image=read_image(os.path.join(path, "image.png")),
        attn=read_attention_stack(os.path.join(path, "attn.astd")),
        self_attn=read_self_attention_stack(os.path.join(path, "self.astd")),
        keypoints=read_keypoints(os.path.join(path, "keypoints.json")),
        instruction=instruction,
        ground_truth=read_mask_png(os.path.join(path, gt_name)),
        name=os.path.basename(os.path.normpath(path)),
    )


def load_fixture_dir(root: str) -> list[Fixture]:
    fixtures = []
    for entry in sorted(os.listdir(root)):
        sub = os.path.join(root, entry)
        if os.path.isdir(sub) and os.path.exists(os.path.join(sub, "fixture.json")):
            fixtures.append(load_fixture(sub))
    return fixtures


def sweep(grid: dict[str, list], fixtures: list[Fixture],
          base_config: PipelineConfig | None = None) -> list[dict]:
    """Mean IoU for every cell of a config grid over a fixture set."""
    if not fixtures:
        raise ParamError("empty fixture set")
    if not grid:
        raise ParamError("empty config grid")
    base = base_config or PipelineConfig()
    keys = sorted(grid.keys())
    rows = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        config = replace(base, **dict(zip(keys, combo)))
        config.validate()
        scores = []
        for fx in fixtures:
            mask, _ = run(fx.image, fx.attn, fx.self_attn, fx.keypoints,
                          fx.instruction, config, ground_truth=fx.ground_truth)
            scores.append(iou(mask.data, fx.ground_truth))
        row = dict(zip(keys, combo))
        row["mean_iou"] = sum(scores) / len(scores)
        row["fixtures"] = len(scores)
        rows.append(row)
    return rows


def write_sweep_csv(rows: list[dict], path: str) -> None:
    if not rows:
        raise ParamError("no sweep rows to write")
    fields = list(rows[0].keys())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
