"""On-disk formats and in-memory tensor types for the pipeline.

The attention dump container ("ASTD", version 1) is self-describing:

    bytes 0..3   magic b"ASTD"
    bytes 4..7   u32 version (little-endian, currently 1)
    bytes 8..11  u32 JSON header length
    ...          UTF-8 JSON header
    ...          float32 little-endian payload, row-major

Cross-attention stacks carry the header keys {T, N, H, W, token_names,
token_kinds}; self-attention stacks carry {K, H, W}. The header is always
emitted in canonical form (fixed key order, no whitespace) so files written
by this module round-trip byte-for-byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import CorruptError, FormatError, IoError

MAGIC = b"ASTD"
VERSION = 1

TOKEN_KINDS = ("star", "fleshy", "clothes")

# BODY-25 keypoint vocabulary. Files may carry any subset of these names.
BODY25_NAMES = (
    "Nose", "Neck",
    "RShoulder", "RElbow", "RWrist",
    "LShoulder", "LElbow", "LWrist",
    "MidHip", "RHip", "RKnee", "RAnkle",
    "LHip", "LKnee", "LAnkle",
    "REye", "LEye", "REar", "LEar",
    "LBigToe", "LSmallToe", "LHeel",
    "RBigToe", "RSmallToe", "RHeel",
)


@dataclass
class AttentionStack:
    """Per-step, per-token cross-attention maps at grid resolution."""

    steps: int
    tokens: int
    height: int
    width: int
    data: np.ndarray  # (steps, tokens, height, width) float32
    token_names: list[str]
    token_kinds: list[str]

    def validate(self) -> None:
        if self.steps < 1 or self.tokens < 1:
            raise ValueError("attention stack needs at least one step and one token")
        expected = (self.steps, self.tokens, self.height, self.width)
        if self.data.shape != expected:
            raise CorruptError(f"payload shape {self.data.shape} != header {expected}")
        if len(self.token_names) != self.tokens or len(self.token_kinds) != self.tokens:
            raise CorruptError("token metadata length does not match token count")
        if len(set(self.token_names)) != len(self.token_names):
            raise ValueError("token names must be unique")
        for kind in self.token_kinds:
            if kind not in TOKEN_KINDS:
                raise ValueError(f"unknown token kind {kind!r}")
        if not np.isfinite(self.data).all():
            raise ValueError("attention values must be finite")
        if (self.data < 0).any():
            raise ValueError("attention values must be non-negative")

    def kind_of(self, name: str) -> str:
        return self.token_kinds[self.token_names.index(name)]

    def maps_for(self, name: str) -> np.ndarray:
        """All per-step maps of one token, shape (steps, height, width)."""
        return self.data[:, self.token_names.index(name)]


@dataclass
class SelfAttentionStack:
    """Final-step self-attention reduced to a small set of spatial maps."""

    maps: int
    height: int
    width: int
    data: np.ndarray  # (maps, height, width) float32

    def validate(self) -> None:
        if self.maps < 1:
            raise ValueError("self-attention stack needs at least one map")
        expected = (self.maps, self.height, self.width)
        if self.data.shape != expected:
            raise CorruptError(f"payload shape {self.data.shape} != header {expected}")
        if not np.isfinite(self.data).all():
            raise ValueError("self-attention values must be finite")
        if (self.data < 0).any():
            raise ValueError("self-attention values must be non-negative")


@dataclass
class KeypointSet:
    """Named 2-D skeletal keypoints with confidences, in pixel coordinates."""

    entries: dict[str, tuple[float, float, float]]  # name -> (x, y, confidence)
    image_width: int
    image_height: int

    def validate(self) -> None:
        for name, (x, y, conf) in self.entries.items():
            if not (0 <= x < self.image_width and 0 <= y < self.image_height):
                raise ValueError(f"keypoint {name} at ({x}, {y}) is outside the image")
            if not (0.0 <= conf <= 1.0):
                raise ValueError(f"keypoint {name} confidence {conf} outside [0, 1]")

    def get(self, name: str, confidence_floor: float = 0.0) -> tuple[float, float] | None:
        """Pixel position of a keypoint, or None when absent or low-confidence.

        MidHip is synthesized from LHip/RHip when missing so anchor rules can
        rely on it for any estimator that omits the pelvis center.
        """
        entry = self.entries.get(name)
        if entry is None and name == "MidHip":
            left = self.entries.get("LHip")
            right = self.entries.get("RHip")
            if left is not None and right is not None:
                entry = (
                    (left[0] + right[0]) / 2.0,
                    (left[1] + right[1]) / 2.0,
                    min(left[2], right[2]),
                )
        if entry is None or entry[2] < confidence_floor:
            return None
        return entry[0], entry[1]


@dataclass
class ImageBuffer:
    """8-bit image, grayscale or RGB, stored (height, width[, 3])."""

    width: int
    height: int
    channels: int
    data: np.ndarray = field(repr=False)

    def validate(self) -> None:
        if self.channels not in (1, 3):
            raise ValueError("images must have 1 or 3 channels")
        expected = (self.height, self.width) if self.channels == 1 else (self.height, self.width, 3)
        if self.data.shape != expected or self.data.dtype != np.uint8:
            raise CorruptError(f"image payload shape {self.data.shape} != {expected} uint8")

    def to_gray(self) -> np.ndarray:
        """Luma as float64 in [0, 255]."""
        if self.channels == 1:
            return self.data.astype(np.float64)
        rgb = self.data.astype(np.float64)
        return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def _canonical_header(pairs: list[tuple[str, object]]) -> bytes:
    text = "{" + ",".join(json.dumps(k) + ":" + json.dumps(v, separators=(",", ":")) for k, v in pairs) + "}"
    return text.encode("utf-8")


def _read_container(path: str) -> tuple[dict, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not an ASTD file")
    version, header_len = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported ASTD version {version}")
    if len(blob) < 12 + header_len:
        raise CorruptError(f"{path}: truncated header")
    try:
        header = json.loads(blob[12: 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptError(f"{path}: unreadable header") from exc
    payload = np.frombuffer(blob, dtype="<f4", offset=12 + header_len)
    return header, payload


def _write_container(path: str, header: bytes, payload: np.ndarray) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", VERSION, len(header)))
            fh.write(header)
            fh.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_attention_stack(path: str) -> AttentionStack:
    """Parse and validate a cross-attention dump."""
    header, payload = _read_container(path)
    for key in ("T", "N", "H", "W", "token_names", "token_kinds"):
        if key not in header:
            raise CorruptError(f"{path}: header missing {key!r}")
    t, n, h, w = (int(header[k]) for k in ("T", "N", "H", "W"))
    if payload.size != t * n * h * w:
        raise CorruptError(f"{path}: payload holds {payload.size} values, header implies {t * n * h * w}")
    stack = AttentionStack(
        steps=t,
        tokens=n,
        height=h,
        width=w,
        data=payload.reshape(t, n, h, w).astype(np.float32),
        token_names=[str(s) for s in header["token_names"]],
        token_kinds=[str(s) for s in header["token_kinds"]],
    )
    stack.validate()
    return stack


def write_attention_stack(stack: AttentionStack, path: str) -> None:
    """Serialize a validated stack; reading it back reproduces it bit-exactly."""
    stack.validate()
    header = _canonical_header([
        ("T", stack.steps),
        ("N", stack.tokens),
        ("H", stack.height),
        ("W", stack.width),
        ("token_names", stack.token_names),
        ("token_kinds", stack.token_kinds),
    ])
    _write_container(path, header, stack.data.reshape(-1))


def read_self_attention_stack(path: str) -> SelfAttentionStack:
    """Parse and validate a self-attention dump (header keys K, H, W)."""
    header, payload = _read_container(path)
    for key in ("K", "H", "W"):
        if key not in header:
            raise CorruptError(f"{path}: header missing {key!r}")
    k, h, w = (int(header[key]) for key in ("K", "H", "W"))
    if payload.size != k * h * w:
        raise CorruptError(f"{path}: payload holds {payload.size} values, header implies {k * h * w}")
    stack = SelfAttentionStack(maps=k, height=h, width=w, data=payload.reshape(k, h, w).astype(np.float32))
    stack.validate()
    return stack


def write_self_attention_stack(stack: SelfAttentionStack, path: str) -> None:
    stack.validate()
    header = _canonical_header([("K", stack.maps), ("H", stack.height), ("W", stack.width)])
    _write_container(path, header, stack.data.reshape(-1))


def read_keypoints(path: str) -> KeypointSet:
    """Parse the keypoint JSON schema.

    Schema: {"image_width": int, "image_height": int,
             "keypoints": {"Neck": [x, y, confidence], ...}}
    Absent keypoints are simply missing, never zero-filled.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON") from exc
    if "image_width" not in doc or "image_height" not in doc:
        raise FormatError(f"{path}: missing image dimensions")
    entries: dict[str, tuple[float, float, float]] = {}
    for name, triple in dict(doc.get("keypoints", {})).items():
        if not isinstance(triple, (list, tuple)) or len(triple) != 3:
            raise FormatError(f"{path}: keypoint {name} is not an [x, y, confidence] triple")
        entries[str(name)] = (float(triple[0]), float(triple[1]), float(triple[2]))
    kps = KeypointSet(entries=entries, image_width=int(doc["image_width"]), image_height=int(doc["image_height"]))
    kps.validate()
    return kps


def write_keypoints(kps: KeypointSet, path: str) -> None:
    kps.validate()
    doc = {
        "image_width": kps.image_width,
        "image_height": kps.image_height,
        "keypoints": {name: list(triple) for name, triple in kps.entries.items()},
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_image(path: str) -> ImageBuffer:
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "RGB"):
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.uint8)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    channels = 1 if arr.ndim == 2 else 3
    buf = ImageBuffer(width=arr.shape[1], height=arr.shape[0], channels=channels, data=arr)
    buf.validate()
    return buf


def write_image(buf: ImageBuffer, path: str) -> None:
    buf.validate()
    try:
        Image.fromarray(buf.data).save(path)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def write_mask_png(mask: np.ndarray, path: str) -> None:
    """Binary mask as an 8-bit PNG with foreground 255."""
    arr = (np.asarray(mask, dtype=bool).astype(np.uint8)) * 255
    try:
        Image.fromarray(arr, mode="L").save(path)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_mask_png(path: str) -> np.ndarray:
    buf = read_image(path)
    return buf.to_gray() >= 128


def write_mask_pgm(mask: np.ndarray, path: str) -> None:
    """Plain-text PGM (P2) dump for toolchain-free inspection."""
    arr = (np.asarray(mask, dtype=bool).astype(np.uint8)) * 255
    h, w = arr.shape
    lines = [f"P2\n{w} {h}\n255\n"]
    for row in arr:
        lines.append(" ".join(str(v) for v in row) + "\n")
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.writelines(lines)
    except OSError as exc:
        raise IoError(str(exc)) from exc
