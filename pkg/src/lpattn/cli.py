"""Batch command-line front end.

Subcommands:

* ``gen``          write a deterministic tensor file (plus JSON sidecar)
* ``run``          one reference-vs-quantized comparison, JSON row on stdout
* ``sweep``        a grid or list of range configurations, CSV rows
* ``codec-table``  dump all 256 E4M3 code/value pairs as CSV

Every command is non-interactive and deterministic given its seed; the
only nondeterministic output field is ``wall_time``.  Exit status is 0 on
success and nonzero on any error, including overflow events in a run
whose configuration was not explicitly waived with ``--expect-overflow``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import tensorio
from .attention import AttentionConfig, attention_quantized, attention_reference
from .metrics import compare
from .numerics import e4m3_code_table
from .quantization import RangeConfig, RangeConfigError

REPORT_FIELDS = [
    "seq_len",
    "head_dim",
    "heads",
    "block_q",
    "block_k",
    "qk_bits",
    "p_r",
    "v_r",
    "depth",
    "causal",
    "smoothing",
    "pv_accumulator",
    "expect_overflow",
    "seed",
    "repetition",
    "cossim",
    "l1",
    "rmse",
    "overflow_events",
    "fp16_to_fp32_conversions",
    "mma_invocations",
    "wall_time",
]

TABLE2_PAIRS = [(448.0, 2.25, 2), (224.0, 4.5, 2), (112.0, 9.0, 2)]


def _add_shape_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seq-len", type=int, default=256)
    parser.add_argument("--head-dim", type=int, default=64)
    parser.add_argument("--heads", type=int, default=1)
    parser.add_argument("--block-q", type=int, default=128)
    parser.add_argument("--block-k", type=int, default=64)


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--qk-bits", type=int, choices=(4, 8), default=8)
    parser.add_argument("--causal", action="store_true")
    parser.add_argument("--no-smoothing", dest="smoothing", action="store_false")
    parser.add_argument(
        "--pv-accumulator",
        choices=("fp16", "fp32"),
        default="fp16",
        help="accumulator of the emulated FP8 value matmul",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpattn",
        description="desk-scale simulator of low-precision quantized attention",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a deterministic tensor file")
    gen.add_argument("--shape", required=True, help="comma-separated sizes, e.g. 8,1024,128")
    gen.add_argument("--distribution", choices=tensorio.DISTRIBUTIONS, default="gaussian")
    gen.add_argument("--mu", type=float, default=0.0)
    gen.add_argument("--sigma", type=float, default=1.0)
    gen.add_argument("--low", type=float, default=0.0)
    gen.add_argument("--high", type=float, default=1.0)
    gen.add_argument("--magnitude", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    run = sub.add_parser("run", help="reference vs quantized, one JSON report row")
    run.add_argument("--q", help="query tensor file (with --k and --v)")
    run.add_argument("--k")
    run.add_argument("--v")
    run.add_argument("--seed", type=int, default=0, help="generate gaussian Q/K/V instead of loading")
    _add_shape_flags(run)
    _add_pipeline_flags(run)
    run.add_argument("--p-r", type=float, default=224.0)
    run.add_argument("--v-r", type=float, default=4.5)
    run.add_argument("--depth", type=int, choices=(1, 2), default=2)
    run.add_argument("--expect-overflow", action="store_true",
                     help="waive the range-product bound and tolerate overflow events")
    run.add_argument("--out", help="also write the JSON row to this path")

    sweep = sub.add_parser("sweep", help="run many range configurations, CSV rows")
    sweep.add_argument("--spec", help="JSON sweep specification file")
    sweep.add_argument("--preset", choices=("table2",),
                       help="built-in pair list (448,2.25) (224,4.5) (112,9) at depth 2")
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--repetitions", type=int, default=1)
    _add_shape_flags(sweep)
    _add_pipeline_flags(sweep)
    sweep.add_argument("--out", help="CSV output path (default stdout)")

    codec = sub.add_parser("codec-table", help="dump the 256-entry E4M3 code table")
    codec.add_argument("--out", help="CSV output path (default stdout)")

    return parser


def _cmd_gen(args) -> int:
    shape = tuple(int(s) for s in args.shape.split(","))
    params = {}
    if args.distribution == "gaussian":
        params = {"mu": args.mu, "sigma": args.sigma}
    elif args.distribution == "uniform":
        params = {"low": args.low, "high": args.high}
    elif args.distribution == "adversarial-max":
        params = {"magnitude": args.magnitude}
    arr, meta = tensorio.generate(shape, args.distribution, args.seed, **params)
    tensorio.write_tensor(args.out, arr, meta)
    print(f"wrote {args.out} shape={list(arr.shape)}", file=sys.stderr)
    return 0


def _load_or_generate(args) -> tuple[np.ndarray, np.ndarray, np.ndarray, AttentionConfig]:
    if args.q or args.k or args.v:
        if not (args.q and args.k and args.v):
            raise ValueError("--q, --k and --v must be given together")
        q = tensorio.read_tensor(args.q)
        k = tensorio.read_tensor(args.k)
        v = tensorio.read_tensor(args.v)
        if q.ndim == 2:
            heads, (seq, dim) = 1, q.shape
        elif q.ndim == 3:
            heads, seq, dim = q.shape
        else:
            raise ValueError("tensors must be (seq, dim) or (heads, seq, dim)")
    else:
        heads, seq, dim = args.heads, args.seq_len, args.head_dim
        shape = (heads, seq, dim)
        q, _ = tensorio.generate(shape, "gaussian", args.seed)
        k, _ = tensorio.generate(shape, "gaussian", args.seed + 1)
        v, _ = tensorio.generate(shape, "gaussian", args.seed + 2)
    config = AttentionConfig(
        seq_len=seq,
        head_dim=dim,
        num_heads=heads,
        block_q=args.block_q,
        block_k=args.block_k,
        qk_bits=args.qk_bits,
        range=RangeConfig(args.p_r, args.v_r, args.depth, args.expect_overflow),
        causal=args.causal,
        smoothing=args.smoothing,
        pv_accumulator=args.pv_accumulator,
    )
    return q, k, v, config


def _report_row(config: AttentionConfig, seed: int, repetition: int,
                reference, q, k, v) -> dict:
    start = time.perf_counter()
    report = attention_quantized(q, k, v, config)
    metrics = compare(reference, report.output)
    elapsed = time.perf_counter() - start
    return {
        "seq_len": config.seq_len,
        "head_dim": config.head_dim,
        "heads": config.num_heads,
        "block_q": config.block_q,
        "block_k": config.block_k,
        "qk_bits": config.qk_bits,
        "p_r": config.range.p_r,
        "v_r": config.range.v_r,
        "depth": config.range.buffering_depth,
        "causal": config.causal,
        "smoothing": config.smoothing,
        "pv_accumulator": config.pv_accumulator,
        "expect_overflow": config.range.expect_overflow,
        "seed": seed,
        "repetition": repetition,
        "cossim": metrics.cossim,
        "l1": metrics.l1,
        "rmse": metrics.rmse,
        "overflow_events": report.overflow_events,
        "fp16_to_fp32_conversions": report.fp16_to_fp32_conversions,
        "mma_invocations": report.mma_invocations,
        "wall_time": elapsed,
    }


def _cmd_run(args) -> int:
    q, k, v, config = _load_or_generate(args)
    reference = attention_reference(q, k, v, config)
    row = _report_row(config, args.seed, 0, reference, q, k, v)
    text = json.dumps(row)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    if row["overflow_events"] > 0 and not args.expect_overflow:
        print(f"error: {row['overflow_events']} unexpected overflow events", file=sys.stderr)
        return 1
    return 0


def _sweep_triples(args) -> list[tuple[float, float, int, bool]]:
    """Resolve the (p_r, v_r, depth, expect_overflow) list, rejecting loudly."""
    triples: list[tuple[float, float, int, bool]] = []
    candidates: list[tuple[float, float, int, bool]] = []
    if args.preset == "table2":
        candidates += [(p, v, d, False) for p, v, d in TABLE2_PAIRS]
    if args.spec:
        spec = json.loads(Path(args.spec).read_text())
        for pair in spec.get("pairs", []):
            candidates.append(
                (
                    float(pair["p_r"]),
                    float(pair["v_r"]),
                    int(pair.get("depth", 2)),
                    bool(pair.get("expect_overflow", False)),
                )
            )
        grid = spec.get("grid")
        if grid:
            depth = int(grid.get("depth", 2))
            for p_r in grid["p_r"]:
                for v_r in grid["v_r"]:
                    candidates.append((float(p_r), float(v_r), depth, False))
    if not candidates:
        raise ValueError("sweep needs --preset and/or --spec with pairs or a grid")
    for p_r, v_r, depth, waived in candidates:
        try:
            RangeConfig(p_r, v_r, depth, waived)
        except RangeConfigError as exc:
            print(f"rejected (p_r={p_r:g}, v_r={v_r:g}, depth={depth}): {exc}",
                  file=sys.stderr)
            continue
        triples.append((p_r, v_r, depth, waived))
    return triples


def _cmd_sweep(args) -> int:
    triples = _sweep_triples(args)
    spec = json.loads(Path(args.spec).read_text()) if args.spec else {}
    input_spec = spec.get("input", {})
    seed = int(input_spec.get("seed", args.seed))
    repetitions = int(spec.get("repetitions", args.repetitions))
    shape = input_spec.get("shape", [args.heads, args.seq_len, args.head_dim])
    heads, seq, dim = (int(s) for s in shape)
    distribution = input_spec.get("distribution", "gaussian")
    params = input_spec.get("parameters", {})

    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=REPORT_FIELDS, lineterminator="\n")
    writer.writeheader()
    failed = False
    for rep in range(repetitions):
        rep_seed = seed + rep
        q, _ = tensorio.generate((heads, seq, dim), distribution, rep_seed, **params)
        k, _ = tensorio.generate((heads, seq, dim), distribution, rep_seed + 1, **params)
        v, _ = tensorio.generate((heads, seq, dim), distribution, rep_seed + 2, **params)
        reference = None
        for p_r, v_r, depth, waived in triples:
            config = AttentionConfig(
                seq_len=seq,
                head_dim=dim,
                num_heads=heads,
                block_q=args.block_q,
                block_k=args.block_k,
                qk_bits=args.qk_bits,
                range=RangeConfig(p_r, v_r, depth, waived),
                causal=args.causal,
                smoothing=args.smoothing,
                pv_accumulator=args.pv_accumulator,
            )
            if reference is None:
                reference = attention_reference(q, k, v, config)
            row = _report_row(config, rep_seed, rep, reference, q, k, v)
            writer.writerow(row)
            if row["overflow_events"] > 0 and not waived:
                print(
                    f"error: unexpected overflow in (p_r={p_r:g}, v_r={v_r:g}, depth={depth})",
                    file=sys.stderr,
                )
                failed = True
    text = buffer.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 1 if failed else 0


def _cmd_codec_table(args) -> int:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["code", "value"])
    for code, value in e4m3_code_table():
        writer.writerow([f"0x{code:02X}", "NaN" if np.isnan(value) else repr(value)])
    if args.out:
        Path(args.out).write_text(buffer.getvalue())
    else:
        sys.stdout.write(buffer.getvalue())
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "gen": _cmd_gen,
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "codec-table": _cmd_codec_table,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
