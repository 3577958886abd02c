"""distmap-extract: score texts with a hub model, write record streams."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractionError, ExtractionJob, extract, read_text_items
from .scoring import SpecError, parse_spec


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="distmap-extract",
        description="Score texts with a causal language model and emit "
        "per-token probability records in the distmap stream schema.",
    )
    parser.add_argument("--model", required=True, help="hub model id or local path")
    parser.add_argument("--input", required=True, help='JSONL of {"text_id", "prompt", "continuation"}')
    parser.add_argument("--schema", choices=["compact", "full"], default="compact")
    parser.add_argument("--spec", default="pure", help="decoding adaptation applied model-side")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    try:
        job = ExtractionJob(
            model_id=args.model,
            texts=read_text_items(args.input),
            device=args.device,
            schema=args.schema,
            steps=parse_spec(args.spec),
            out_path=args.out,
        )
        extract(job)
    except (ExtractionError, SpecError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for err in job.errors:
        print(f"text error: {err}", file=sys.stderr)
    return 1 if job.errors else 0


if __name__ == "__main__":
    sys.exit(main())
