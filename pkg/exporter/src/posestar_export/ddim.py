"""Deterministic DDIM inversion and reconstruction with per-step null-text
optimization.

Inversion walks the clean latent up the noise schedule using the conditional
prediction; reconstruction walks back down with classifier-free guidance.
Because the two passes evaluate the model at different latents, the round
trip is not symmetric; optimizing the null embedding per reconstruction step
against the stored inversion trajectory closes most of that gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import LATENT, ToyLatentModel


def alpha_bar_schedule(steps: int) -> np.ndarray:
    """Cumulative signal level per step, 1 (clean) down to a noisy floor."""
    t = np.linspace(0.0, 1.0, steps + 1)
    return np.cos(0.5 * np.pi * t * 0.86) ** 2


@dataclass
class Trajectory:
    """Latents and hooked attention along the reconstruction pass."""

    latents: list[np.ndarray] = field(default_factory=list)
    cross_maps: list[np.ndarray] = field(default_factory=list)  # (N, 16, 16) per step
    null_values: list[float] = field(default_factory=list)
    final_self_attention: np.ndarray | None = None
    reconstruction_error: float = 0.0
    inversion_latents: list[np.ndarray] = field(default_factory=list)


def _step_down(model: ToyLatentModel, latent: np.ndarray, words: list[str],
               null_scalar: float, ab_t: float, ab_prev: float) -> np.ndarray:
    base, gain = model.eps_parts(latent, words)
    eps = base + gain * null_scalar
    x0 = (latent - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
    return np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps


def invert(model: ToyLatentModel, clean: np.ndarray, words: list[str], steps: int) -> list[np.ndarray]:
    """Noise the clean latent step by step; returns latents [z_0 .. z_T]."""
    ab = alpha_bar_schedule(steps)
    latents = [clean.copy()]
    z = clean.copy()
    for t in range(steps):
        eps = model.eps(z, words, model.values["null"])
        x0 = (z - np.sqrt(1.0 - ab[t]) * eps) / np.sqrt(ab[t])
        z = np.sqrt(ab[t + 1]) * x0 + np.sqrt(1.0 - ab[t + 1]) * eps
        latents.append(z.copy())
    return latents


def reconstruct(model: ToyLatentModel, inversion: list[np.ndarray], words: list[str],
                optimize_null: bool = True) -> Trajectory:
    """Walk back down the schedule, optionally optimizing the null value so
    each step lands on the stored inversion latent.

    The null embedding enters the prediction affinely, so the per-step
    objective is an exact least-squares problem; solving it corresponds to a
    fully converged inner optimization.
    """
    steps = len(inversion) - 1
    ab = alpha_bar_schedule(steps)
    traj = Trajectory(inversion_latents=[z.copy() for z in inversion])
    z = inversion[-1].copy()
    default_scalar = float(model.values["null"] @ model.w_out)
    for t in range(steps, 0, -1):
        target = inversion[t - 1]
        base, gain = model.eps_parts(z, words)
        # z_prev(s) = sqrt(ab_prev) * x0(s) + sqrt(1 - ab_prev) * eps(s), affine in s
        coeff = (np.sqrt(1.0 - ab[t - 1])
                 - np.sqrt(ab[t - 1]) * np.sqrt(1.0 - ab[t]) / np.sqrt(ab[t]))
        const = (np.sqrt(ab[t - 1]) / np.sqrt(ab[t]) * z
                 + coeff * base)
        slope = coeff * gain
        if optimize_null:
            denom = float((slope * slope).sum())
            if denom > 1e-12:
                scalar = float((slope * (target - const)).sum() / denom)
            else:
                scalar = default_scalar
        else:
            scalar = default_scalar
        z = const + slope * scalar
        traj.null_values.append(scalar)
        traj.latents.append(z.copy())
        attn = model.cross_attention(z, [*words, "null"])
        traj.cross_maps.append(attn[:, :-1].T.reshape(len(words), 16, 16))
    traj.final_self_attention = model.self_attention(z)
    traj.reconstruction_error = float(np.sqrt(((z - inversion[0]) ** 2).mean()))
    return traj


def image_to_latent(gray: np.ndarray) -> np.ndarray:
    """8-bit grayscale image block-averaged to the latent grid in [-1, 1]."""
    h, w = gray.shape
    bh, bw = h // LATENT, w // LATENT
    pooled = gray[: bh * LATENT, : bw * LATENT].reshape(LATENT, bh, LATENT, bw).mean(axis=(1, 3))
    return pooled.astype(np.float64) / 127.5 - 1.0
