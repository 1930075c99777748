"""Exporter acceptance: dump contract, shapes, and the optimization payoff.

Validation of exported files goes through the mask pipeline's own reader,
proving the two independently written sides of the format agree.
"""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from posestar_export.export import ExportJob, run_export

posestar_tensorio = pytest.importorskip(
    "posestar.tensorio", reason="interop check needs the mask pipeline installed")


def make_image(path, seed):
    rng = np.random.default_rng(seed)
    img = np.full((256, 256), 40, dtype=np.uint8)
    x = int(rng.integers(60, 120))
    y = int(rng.integers(30, 60))
    img[y: y + 170, x: x + 80] = 120
    img[y + 20: y + 100, x + 10: x + 70] = 205
    for _ in range(4):
        cx, cy = rng.integers(0, 220, 2)
        img[cy: cy + 18, cx: cx + 18] = int(rng.integers(60, 200))
    Image.fromarray(img).save(path)
    return str(path)


TOKENS = ["Neck", "Shoulder", "Chest", "Waist", "Belly", "blouse"]


def test_exporter_contract(tmp_path):
    improvements = []
    for i in range(3):
        image = make_image(tmp_path / f"img{i}.png", seed=100 + i)
        job = ExportJob(
            image_path=image, tokens=TOKENS, steps=100,
            out_attn=str(tmp_path / f"a{i}.astd"),
            out_self=str(tmp_path / f"s{i}.astd"),
            seed=i,
        )
        report = run_export(job)

        # round-trip through the consumer-side reader, full validation
        stack = posestar_tensorio.read_attention_stack(str(tmp_path / f"a{i}.astd"))
        stack.validate()
        assert stack.data.shape == (100, len(TOKENS), 16, 16)
        assert stack.token_names == TOKENS
        selfs = posestar_tensorio.read_self_attention_stack(str(tmp_path / f"s{i}.astd"))
        selfs.validate()
        assert selfs.data.shape == (8, 32, 32)

        # consumer-side writer reproduces the exporter's bytes
        posestar_tensorio.write_attention_stack(stack, str(tmp_path / f"re{i}.astd"))
        assert (tmp_path / f"re{i}.astd").read_bytes() == (tmp_path / f"a{i}.astd").read_bytes()

        assert report.baseline_error is not None
        improvements.append(report.baseline_error - report.reconstruction_error)
        print(f"[{'PASS' if improvements[-1] > 0 else 'FAIL'}] exporter image {i}: "
              f"null-text L2 {report.reconstruction_error:.5f} vs plain {report.baseline_error:.5f}")

    assert all(d > 0 for d in improvements), improvements
