"""Export jobs: image in, ASTD attention dumps out.

The cross dump holds one 16x16 map per prompt token per reconstruction step.
The self dump reduces the final-step 1024x1024 self-attention to eight 32x32
maps by weighting its rows with fine target maps computed from the exported
cross-attention, so the reduction needs nothing beyond this package.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .astd import write_cross_dump, write_self_dump
from .backend import CROSS, LATENT, ToyLatentModel, load_backend
from .ddim import Trajectory, image_to_latent, invert, reconstruct

TOKEN_KIND_TABLE = {
    "Neck": "star", "Shoulder": "star", "Elbow": "star", "Wrist": "star",
    "Hip": "star", "Knee": "star", "Ankle": "star",
    "Forehead": "fleshy", "Chest": "fleshy", "Waist": "fleshy", "Belly": "fleshy",
    "Arms": "fleshy", "Hand": "fleshy", "Thigh": "fleshy", "Shank": "fleshy",
    "Torso": "fleshy",
}


@dataclass
class ExportJob:
    image_path: str
    tokens: list[str]
    steps: int = 100
    out_attn: str = "attn.astd"
    out_self: str = "self.astd"
    backend: str = "toy"
    seed: int = 0
    guidance: float = 2.0
    optimize_null: bool = True

    def validate(self) -> None:
        if not self.tokens:
            raise ValueError("token list must be non-empty")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass
class ExportReport:
    reconstruction_error: float = 0.0
    baseline_error: float | None = None
    seconds: float = 0.0
    tokens: list[str] = field(default_factory=list)
    steps: int = 0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def load_gray(path: str) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.float64)


def token_kinds(tokens: list[str]) -> list[str]:
    return [TOKEN_KIND_TABLE.get(t, "clothes") for t in tokens]


def invert_and_reconstruct(model: ToyLatentModel, gray: np.ndarray, words: list[str],
                           steps: int, optimize_null: bool) -> Trajectory:
    clean = image_to_latent(gray)
    inversion = invert(model, clean, words, steps)
    return reconstruct(model, inversion, words, optimize_null=optimize_null)


def normalize_map(m: np.ndarray) -> np.ndarray:
    peak = m.max()
    return m / peak if peak > 0 else m


def export_cross_attention(trajectory: Trajectory, tokens: list[str]) -> np.ndarray:
    """(T, N, 16, 16) float32, each map normalized to [0, 1]."""
    steps = len(trajectory.cross_maps)
    maps = np.zeros((steps, len(tokens), CROSS, CROSS), dtype=np.float64)
    for t, step_maps in enumerate(trajectory.cross_maps):
        for n in range(len(tokens)):
            maps[t, n] = normalize_map(step_maps[n])
    return maps.astype(np.float32)


def fine_targets_from_cross(maps: np.ndarray, beta: float = 0.3, lanes: int = 8) -> np.ndarray:
    """Compact threshold-average plus step-band pooling of the cross dump.

    Per step: mean over the tokens that clear beta (zero where none does).
    Steps then pool into `lanes` contiguous bands. Mirrors the mask
    pipeline's aggregation defaults closely enough to weight the
    self-attention reduction.
    """
    steps = maps.shape[0]
    coarse = np.zeros((steps, CROSS, CROSS))
    for t in range(steps):
        keep = maps[t] > beta
        counts = keep.sum(axis=0)
        total = np.where(keep, maps[t], 0.0).sum(axis=0)
        coarse[t] = np.where(counts > 0, total / np.maximum(counts, 1), 0.0)
    bands = np.array_split(np.arange(steps), lanes)
    return np.stack([coarse[idx].mean(axis=0) if len(idx) else np.zeros((CROSS, CROSS))
                     for idx in bands])


def export_self_attention(trajectory: Trajectory, fine_targets: np.ndarray) -> np.ndarray:
    """(8, 32, 32) float32: self-attention rows weighted by each fine map.

    S_k(p) = sum_q A(q -> p) * C_k(q) / sum_q C_k(q); an empty fine map falls
    back to uniform weights.
    """
    attn = trajectory.final_self_attention  # (1024, 1024), rows sum to 1
    lanes = fine_targets.shape[0]
    out = np.zeros((lanes, LATENT, LATENT), dtype=np.float64)
    for k in range(lanes):
        weights16 = fine_targets[k]
        weights = np.repeat(np.repeat(weights16, 2, axis=0), 2, axis=1).reshape(-1)
        total = weights.sum()
        if total <= 0:
            weights = np.full(LATENT * LATENT, 1.0 / (LATENT * LATENT))
            total = 1.0
        reduced = (weights / total) @ attn
        out[k] = normalize_map(reduced.reshape(LATENT, LATENT))
    return out.astype(np.float32)


def run_export(job: ExportJob) -> ExportReport:
    job.validate()
    start = time.perf_counter()
    model = load_backend(job.backend, seed=job.seed, guidance=job.guidance)
    words = model.tokenize(job.tokens)
    gray = load_gray(job.image_path)
    trajectory = invert_and_reconstruct(model, gray, words, job.steps, job.optimize_null)
    cross = export_cross_attention(trajectory, words)
    write_cross_dump(job.out_attn, cross, words, token_kinds(words))
    fine = fine_targets_from_cross(cross.astype(np.float64))
    selfmaps = export_self_attention(trajectory, fine)
    write_self_dump(job.out_self, selfmaps)
    report = ExportReport(
        reconstruction_error=trajectory.reconstruction_error,
        seconds=round(time.perf_counter() - start, 3),
        tokens=words,
        steps=job.steps,
    )
    if job.optimize_null:
        baseline = invert_and_reconstruct(model, gray, words, job.steps, optimize_null=False)
        report.baseline_error = baseline.reconstruction_error
    return report
