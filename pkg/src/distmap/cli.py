"""Command-line surface: map, hist, validate, simulate, shape, compact.

Exit codes: 0 success (validate: claim consistent at alpha), 1 claim
rejected, 2 input/format/parameter errors. All outputs are deterministic
bytes given identical inputs, flags and seed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .decoding import DecodingSpec
from .engine import EngineConfig, bin_density, map_streams, weighted_density
from .errors import EmptyInputError, FormatError, ImpossibleToken, ParameterError
from .records import TextRecordStream, parse_stream, serialize_compact, serialize_full
from .stats import frequencies, shape_summary, validate_generation
from .svg import histogram_svg
from .toylm import evaluate, generate, random_model

PLOT_BINS_DEFAULT = 40


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schema", choices=["full", "compact"], default="compact")
    p.add_argument("--spec", default="pure", help='decoding spec, e.g. "temp=0.7+topp=0.9"')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=2.0, help="entropy clip level")
    p.add_argument("--clip-mode", choices=["cap", "floor"], default="cap")
    p.add_argument("--include-prompt", action="store_true")
    p.add_argument("--initial-cutoff", type=int, default=0, metavar="N")
    p.add_argument("--bins", default="auto", help='"auto" or an integer')
    p.add_argument("--entropy-slice", default=None, metavar="LO:HI")
    p.add_argument("--order", choices=["dynamic", "random-pit"], default="dynamic")
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["csv", "svg", "json"], default=None)


def _engine_config(args) -> EngineConfig:
    entropy_range = None
    if args.entropy_slice:
        lo_s, _, hi_s = args.entropy_slice.partition(":")
        if not hi_s:
            raise ParameterError(f"cannot parse entropy slice {args.entropy_slice!r}")
        entropy_range = (float(lo_s), float(hi_s) if hi_s != "inf" else math.inf)
    return EngineConfig(
        seed=args.seed,
        lam=args.lam,
        clip_mode=args.clip_mode,
        include_prompt=args.include_prompt,
        initial_cutoff=args.initial_cutoff,
        order_mode=args.order.replace("-", "_"),
        entropy_range=entropy_range,
    )


def _read_streams(paths: list[str], schema: str) -> list[TextRecordStream]:
    streams: list[TextRecordStream] = []
    for path in sorted(paths):
        with open(path, "r", encoding="utf-8") as fh:
            streams.extend(parse_stream(fh, schema=schema))
    streams.sort(key=lambda s: s.text_id)
    if not streams:
        raise EmptyInputError("no records in input")
    return streams


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _bins_arg(args, default: int | None) -> int | None:
    if args.bins == "auto":
        return default
    try:
        k = int(args.bins)
    except ValueError:
        raise ParameterError(f'--bins must be "auto" or an integer, got {args.bins!r}') from None
    if k < 1:
        raise ParameterError("--bins must be >= 1")
    return k


def cmd_map(args) -> int:
    cfg = _engine_config(args)
    spec = DecodingSpec.parse(args.spec)
    streams = _read_streams(args.inputs, args.schema)
    result = map_streams(streams, spec, cfg)
    lines = [
        json.dumps(
            {"text_id": s.text_id, "pos": s.pos, "x": s.x, "weight": s.weight, "entropy": s.entropy}
        )
        for s in result.samples
    ]
    _write(args.out, "\n".join(lines) + "\n" if lines else "")
    if result.impossible_tokens:
        print(f"impossible tokens: {result.impossible_tokens}", file=sys.stderr)
    return 0


def _csv_text(heights: np.ndarray) -> str:
    k = heights.size
    rows = ["bin_lo,bin_hi,height"]
    for j in range(k):
        rows.append(f"{j / k:.10g},{(j + 1) / k:.10g},{heights[j]:.10g}")
    return "\n".join(rows) + "\n"


def cmd_hist(args) -> int:
    cfg = _engine_config(args)
    spec = DecodingSpec.parse(args.spec)
    streams = _read_streams(args.inputs, args.schema)
    k = _bins_arg(args, PLOT_BINS_DEFAULT)
    if args.plain:
        result = map_streams(streams, spec, cfg)
        if not result.samples:
            raise EmptyInputError("no usable samples")
        heights = frequencies([s.x for s in result.samples], k) * k
        title = f"unweighted histogram, spec={spec}"
    else:
        heights = bin_density(weighted_density(streams, spec, cfg), k)
        title = f"entropy-weighted density, spec={spec}"
    csv_text = _csv_text(heights)
    svg_text = histogram_svg(heights, title=title)
    if args.format == "csv":
        _write(args.out, csv_text)
    elif args.format == "svg":
        _write(args.out, svg_text)
    else:
        if args.out is None:
            _write(None, csv_text)
        else:
            _write(args.out + ".csv", csv_text)
            _write(args.out + ".svg", svg_text)
    return 0


def cmd_validate(args) -> int:
    cfg = _engine_config(args)
    claimed = DecodingSpec.parse(args.spec)
    streams = _read_streams(args.inputs, args.schema)
    report = validate_generation(streams, claimed, cfg, bins=_bins_arg(args, None))
    _write(args.out, json.dumps(report.to_json(), sort_keys=True) + "\n")
    log10_str = "-inf" if math.isinf(report.log10_p) else f"{report.log10_p:.4f}"
    print(
        f"claim={claimed} T={report.T} k={report.k} chi2={report.chi2:.4f} "
        f"log10_p={log10_str} impossible={report.impossible_tokens}",
        file=sys.stderr,
    )
    if report.small_sample_warning:
        print(f"warning: T={report.T} < 10k={10 * report.k}; p-value unreliable", file=sys.stderr)
    return 0 if report.p_value >= args.alpha else 1


def cmd_simulate(args) -> int:
    model = random_model(args.model_seed, args.vocab_size, args.concentration)
    if args.eval_model_seed is not None:
        evaluator = random_model(args.eval_model_seed, args.vocab_size, args.concentration)
    else:
        evaluator = model
    spec = DecodingSpec.parse(args.spec)
    streams = []
    for t in range(args.texts):
        run = generate(model, spec, args.length, seed=args.seed + t, text_id=f"sim-{t:04d}")
        streams.append(evaluate(run, evaluator, text_id=f"sim-{t:04d}"))
    _write(args.out, serialize_full(streams))
    return 0


def cmd_shape(args) -> int:
    cfg = _engine_config(args)
    spec = DecodingSpec.parse(args.spec)
    streams = _read_streams(args.inputs, args.schema)
    k = _bins_arg(args, PLOT_BINS_DEFAULT)
    heights = bin_density(weighted_density(streams, spec, cfg), k)
    summary = shape_summary(heights)
    out = {"bins": k, **summary.to_json()}
    _write(args.out, json.dumps(out, sort_keys=True) + "\n")
    return 0


def cmd_compact(args) -> int:
    streams = _read_streams(args.inputs, "full")
    _write(args.out, serialize_compact(streams))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distmap",
        description="Map next-token probability records onto the unit interval, "
        "plot the densities, and validate claimed decoding parameters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="write unit-interval samples for each record")
    p.add_argument("inputs", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("hist", help="binned density as CSV and/or SVG")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--plain", action="store_true", help="unweighted sample histogram")
    _add_common(p)
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("validate", help="chi-square test of a claimed decoding spec")
    p.add_argument("inputs", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="toy-model generation, full-record stream out")
    _add_common(p)
    p.add_argument("--vocab-size", type=int, default=16)
    p.add_argument("--concentration", type=float, default=1.0)
    p.add_argument("--model-seed", type=int, default=1)
    p.add_argument("--eval-model-seed", type=int, default=None, help="cross-model evaluation")
    p.add_argument("--length", type=int, default=1000)
    p.add_argument("--texts", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("shape", help="classify the binned density shape")
    p.add_argument("inputs", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_shape)

    p = sub.add_parser("compact", help="convert full-schema records to the compact schema")
    p.add_argument("inputs", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_compact)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, ParameterError, EmptyInputError, ImpossibleToken, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
