"""Reference latent-diffusion backend, small enough to run anywhere.

The model is a fixed-weight, numpy-only denoiser with the attention layout
the exporter needs: cross-attention between 16x16 latent queries and token
key/value embeddings, and 32x32 spatial self-attention. Weights derive
deterministically from a model seed, so trajectories are reproducible
byte-for-byte. The null token's value embedding enters the prediction
affinely, which the per-step null-text optimizer exploits.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

LATENT = 32
CROSS = 16
FEATURES = 8

VOCABULARY = (
    "null",
    "Neck", "Shoulder", "Elbow", "Wrist", "Hip", "Knee", "Ankle",
    "Forehead", "Chest", "Waist", "Belly", "Arms", "Hand", "Thigh", "Shank", "Torso",
    "blouse", "shirt", "dress", "skirt", "pants", "top", "gown",
)


class EnvError(RuntimeError):
    """Requested diffusion backend is not available."""


class TokenizationError(ValueError):
    """Prompt tokens missing from the backend vocabulary."""


def _token_embedding(word: str, dim: int, salt: str) -> np.ndarray:
    digest = hashlib.sha256(f"{salt}:{word}".encode()).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.Generator(np.random.PCG64(seed))
    vec = rng.normal(0.0, 1.0, dim)
    return vec / np.linalg.norm(vec)


@dataclass
class ToyLatentModel:
    """Deterministic epsilon predictor with hooked attention."""

    seed: int = 0
    guidance: float = 2.0
    keys: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    values: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        rng = np.random.Generator(np.random.PCG64(self.seed * 9176 + 5))
        self.w_feat = rng.normal(0.0, 0.4, (9, FEATURES))
        self.w_q = rng.normal(0.0, 1.0, (FEATURES, FEATURES)) / np.sqrt(FEATURES)
        self.w_qs = rng.normal(0.0, 1.0, (FEATURES, FEATURES)) / np.sqrt(FEATURES)
        self.w_ks = rng.normal(0.0, 1.0, (FEATURES, FEATURES)) / np.sqrt(FEATURES)
        self.w_out = rng.normal(0.0, 0.5, FEATURES)
        self.mix = 0.55
        for word in VOCABULARY:
            self.keys[word] = _token_embedding(word, FEATURES, f"key{self.seed}")
            self.values[word] = _token_embedding(word, FEATURES, f"value{self.seed}")

    def tokenize(self, words: list[str]) -> list[str]:
        unknown = [w for w in words if w not in self.keys]
        if unknown:
            raise TokenizationError(f"tokens not in vocabulary: {unknown}")
        return list(words)

    def features(self, latent: np.ndarray) -> np.ndarray:
        """Per-position features from the 3x3 neighborhood, (LATENT^2, F)."""
        shifts = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                shifts.append(np.roll(np.roll(latent, di, axis=0), dj, axis=1))
        stacked = np.stack(shifts, axis=-1).reshape(-1, 9)
        return np.tanh(stacked @ self.w_feat)

    def cross_queries(self, latent: np.ndarray) -> np.ndarray:
        feats = self.features(latent).reshape(LATENT, LATENT, FEATURES)
        pooled = feats.reshape(CROSS, 2, CROSS, 2, FEATURES).mean(axis=(1, 3))
        return pooled.reshape(-1, FEATURES) @ self.w_q

    def cross_attention(self, latent: np.ndarray, words: list[str]) -> np.ndarray:
        """Softmax attention weights, shape (CROSS*CROSS, len(words))."""
        queries = self.cross_queries(latent)
        key_mat = np.stack([self.keys[w] for w in words], axis=1)
        logits = queries @ key_mat / np.sqrt(FEATURES)
        logits -= logits.max(axis=1, keepdims=True)
        weights = np.exp(logits)
        return weights / weights.sum(axis=1, keepdims=True)

    def self_attention(self, latent: np.ndarray) -> np.ndarray:
        """Spatial self-attention, shape (LATENT^2, LATENT^2)."""
        feats = self.features(latent)
        q = feats @ self.w_qs
        k = feats @ self.w_ks
        logits = q @ k.T / np.sqrt(FEATURES)
        logits -= logits.max(axis=1, keepdims=True)
        weights = np.exp(logits)
        return weights / weights.sum(axis=1, keepdims=True)

    def eps_parts(self, latent: np.ndarray, words: list[str]) -> tuple[np.ndarray, np.ndarray]:
        """Prediction split as (base, null_gain) with eps = base + null_gain @ null_value.

        The conditional branch attends over word tokens plus the null token;
        the unconditional branch sees the null token alone. Both context
        contributions are linear in the embeddings, so the null value enters
        the final guided prediction affinely.
        """
        attn = self.cross_attention(latent, [*words, "null"])
        token_values = np.stack([self.values[w] for w in words])  # (N, F)
        ctx_tokens = attn[:, :-1] @ token_values  # (256, F)
        null_weight_cond = attn[:, -1:]  # (256, 1)

        def spatial(context_vec: np.ndarray) -> np.ndarray:
            out16 = (context_vec @ self.w_out).reshape(CROSS, CROSS)
            return np.repeat(np.repeat(out16, 2, axis=0), 2, axis=1)

        base_cond = spatial(ctx_tokens)
        base = self.mix * latent + self.guidance * base_cond
        # null contributions: conditional branch weight g * w_cond, uncond (1 - g) * 1
        null_gain16 = (self.guidance * null_weight_cond[:, 0]
                       + (1.0 - self.guidance)).reshape(CROSS, CROSS)
        null_gain = np.repeat(np.repeat(null_gain16, 2, axis=0), 2, axis=1)
        return base, null_gain

    def eps(self, latent: np.ndarray, words: list[str], null_value: np.ndarray) -> np.ndarray:
        base, gain = self.eps_parts(latent, words)
        return base + gain * float(null_value @ self.w_out)


def load_backend(name: str = "toy", seed: int = 0, guidance: float = 2.0) -> ToyLatentModel:
    if name != "toy":
        raise EnvError(f"diffusion backend {name!r} is not available in this build")
    return ToyLatentModel(seed=seed, guidance=guidance)
