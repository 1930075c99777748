"""Command line for the attention exporter."""

from __future__ import annotations

import argparse
import json
import sys

from .backend import EnvError, TokenizationError
from .export import ExportJob, run_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posestar-export",
                                     description="Export diffusion attention dumps for mask synthesis")
    parser.add_argument("--image", required=True)
    parser.add_argument("--tokens", required=True,
                        help="JSON file or inline JSON list of prompt tokens")
    parser.add_argument("--steps", type=int, default=100)
    parser.add_argument("--out-attn", required=True)
    parser.add_argument("--out-self", required=True)
    parser.add_argument("--backend", default="toy")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--guidance", type=float, default=2.0)
    parser.add_argument("--no-null-opt", action="store_true",
                        help="plain DDIM reconstruction, no null-text optimization")
    parser.add_argument("--report", default=None)
    return parser


def _load_tokens(spec: str) -> list[str]:
    text = spec
    if not spec.lstrip().startswith("["):
        with open(spec, "r", encoding="utf-8") as fh:
            text = fh.read()
    doc = json.loads(text)
    if isinstance(doc, dict):
        tokens = [*doc.get("star_tokens", []), *doc.get("fleshy_tokens", []),
                  *doc.get("clothes_tokens", [])]
    else:
        tokens = list(doc)
    return [str(t) for t in tokens]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            image_path=args.image,
            tokens=_load_tokens(args.tokens),
            steps=args.steps,
            out_attn=args.out_attn,
            out_self=args.out_self,
            backend=args.backend,
            seed=args.seed,
            guidance=args.guidance,
            optimize_null=not args.no_null_opt,
        )
        report = run_export(job)
    except (TokenizationError, EnvError, ValueError, OSError) as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return 2
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    print(report.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
