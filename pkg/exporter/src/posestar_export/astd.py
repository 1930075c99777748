"""Writer for the ASTD v1 attention dump container.

Layout: magic "ASTD", u32 version 1, u32 header length, canonical UTF-8 JSON
header, then row-major little-endian float32 payload. Cross-attention dumps
carry {T, N, H, W, token_names, token_kinds}; self-attention dumps carry
{K, H, W}. Matches the mask pipeline's reader byte for byte.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ASTD"
VERSION = 1


def _canonical_header(pairs: list[tuple[str, object]]) -> bytes:
    text = "{" + ",".join(json.dumps(k) + ":" + json.dumps(v, separators=(",", ":"))
                          for k, v in pairs) + "}"
    return text.encode("utf-8")


def _write(path: str, header: bytes, payload: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())


def write_cross_dump(path: str, maps: np.ndarray, token_names: list[str],
                     token_kinds: list[str]) -> None:
    steps, tokens, h, w = maps.shape
    if len(token_names) != tokens or len(token_kinds) != tokens:
        raise ValueError("token metadata length mismatch")
    if not np.isfinite(maps).all() or (maps < 0).any():
        raise ValueError("attention values must be finite and non-negative")
    header = _canonical_header([
        ("T", steps), ("N", tokens), ("H", h), ("W", w),
        ("token_names", list(token_names)), ("token_kinds", list(token_kinds)),
    ])
    _write(path, header, maps.reshape(-1))


def write_self_dump(path: str, maps: np.ndarray) -> None:
    k, h, w = maps.shape
    if not np.isfinite(maps).all() or (maps < 0).any():
        raise ValueError("attention values must be finite and non-negative")
    header = _canonical_header([("K", k), ("H", h), ("W", w)])
    _write(path, header, maps.reshape(-1))
