"""Command-line surface: file encode/decode, experiments, table sizing.

Symbols are whole bytes on disk (widths 8, 16, or 32), so files map to
symbol arrays without bit twiddling.  A trailing partial symbol is
zero-padded for encoding and the true byte length rides in the patch
header, so decode restores the file exactly.

Exit codes: 0 success, 1 file or patch-format trouble, 2 bad usage or
infeasible parameters, 3 decode finished but content was left in the
table (partial recovery).

The default seed comes from the BIFF_SEED environment variable when set;
an explicit --seed always wins.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from .analysis import biff_overhead_factor, size_table, threshold
from .codec import (
    HEADER_SIZE,
    CodecParams,
    decode,
    deserialize_patch,
    encode,
    patch_size_bytes,
    read_patch_header,
    serialize_patch,
)
from .errors import BiffError, ParameterError, PatchFormatError
from .hashing import ChecksumFlavor
from .experiment import ExperimentConfig, ExperimentKind, TimingMode, TrialRow, run_experiment

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3

_FILE_WIDTHS = (8, 16, 32)
_WIDTH_DTYPE = {8: "<u1", 16: "<u2", 32: "<u4"}
_FLAVORS = {"hash": ChecksumFlavor.HASH, "poly": ChecksumFlavor.POLY}


def _env_seed() -> int:
    raw = os.environ.get("BIFF_SEED")
    if raw is None:
        return 0
    try:
        return int(raw, 0)
    except ValueError as exc:
        raise ParameterError(f"BIFF_SEED is not an integer: {raw!r}") from exc


def _read_symbols(path: str, symbol_bits: int) -> tuple[np.ndarray, int]:
    """File bytes as uint64 symbols plus the unpadded byte length."""
    with open(path, "rb") as fh:
        data = fh.read()
    rec = symbol_bits // 8
    pad = (-len(data)) % rec
    padded = data + b"\0" * pad
    return np.frombuffer(padded, dtype=_WIDTH_DTYPE[symbol_bits]).astype(np.uint64), len(data)


def _write_symbols(path: str, values: np.ndarray, symbol_bits: int, byte_len: int) -> None:
    blob = values.astype(_WIDTH_DTYPE[symbol_bits]).tobytes()
    with open(path, "wb") as fh:
        fh.write(blob[:byte_len])


def _params_for_file(n: int, args: argparse.Namespace) -> CodecParams:
    if n == 0:
        # empty payload: header-only patch, no cells
        return CodecParams(
            symbol_width=args.symbol_bits,
            position_width=1,
            k=args.k,
            m=0,
            checksum_bits=args.checksum_bits,
            seed=args.seed,
            flavor=_FLAVORS[args.checksum],
        )
    if args.cells is not None:
        m = args.cells
    elif args.errors is not None:
        m = size_table(args.errors, args.k, args.slack)
    else:
        raise ParameterError("give either --cells or --errors to size the table")
    return CodecParams(
        symbol_width=args.symbol_bits,
        position_width=max(n.bit_length(), 1),
        k=args.k,
        m=m,
        checksum_bits=args.checksum_bits,
        seed=args.seed,
        flavor=_FLAVORS[args.checksum],
    )


def cmd_encode(args: argparse.Namespace) -> int:
    message, byte_len = _read_symbols(args.input, args.symbol_bits)
    params = _params_for_file(message.size, args)
    patch = encode(message, params)
    blob = serialize_patch(patch, params, n_symbols=message.size, payload_byte_len=byte_len)
    with open(args.patch, "wb") as fh:
        fh.write(blob)
    print(f"symbols = {message.size}")
    print(f"m = {params.m}")
    print(f"k = {params.k}")
    print(f"patch_bytes = {len(blob)}")
    if args.errors and params.m:
        ov = biff_overhead_factor(params, args.errors)
        print(f"overhead_factor = {ov.naive_factor:.2f}")
        print(f"overhead_factor_excluding_positions = {ov.inherent_factor:.2f}")
    elif params.m == 0:
        print("overhead_factor = n/a (empty patch)")
    else:
        print("overhead_factor = n/a (no --errors bound given)")
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    with open(args.patch, "rb") as fh:
        blob = fh.read()
    head = read_patch_header(blob)
    params = head.params
    patch, _ = deserialize_patch(blob)
    received, byte_len = _read_symbols(args.input, params.symbol_width)
    if received.size != head.n_symbols:
        print(
            f"input holds {received.size} symbols, patch was built over {head.n_symbols}",
            file=sys.stderr,
        )
        return EXIT_IO
    out_len = head.payload_byte_len if head.payload_byte_len is not None else byte_len
    corrected, report = decode(received, patch, params)
    _write_symbols(args.output, corrected, params.symbol_width, out_len)
    print(f"success = {report.success}")
    print(f"corrections = {len(report.corrections)}")
    print(f"residual_cells = {report.residual_cells}")
    print(f"anomalies = {report.anomalies}")
    return EXIT_OK if report.success else EXIT_PARTIAL


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    kind = ExperimentKind(args.kind)
    if args.cells is not None:
        m = args.cells
    elif args.errors:
        m = size_table(args.errors, args.k, args.slack)
    else:
        raise ParameterError("give either --cells or --errors to size the table")
    error_count = args.errors or 0
    if kind is ExperimentKind.BURST and not error_count:
        error_count = args.burst_len * args.burst_count
    engine = args.engine
    if engine is None:
        engine = "full" if kind is ExperimentKind.TIMING else "delta"
    return ExperimentConfig(
        kind=kind,
        trials=args.trials,
        n=args.n,
        m=m,
        k=args.k,
        error_count=error_count,
        cell_error_count=args.cell_errors,
        burst_len=args.burst_len,
        burst_count=args.burst_count,
        symbol_width=args.symbol_bits,
        checksum_bits=args.checksum_bits,
        checksum_flavor=_FLAVORS[args.checksum],
        base_seed=args.seed,
        engine=engine,
        timing_mode=TimingMode(args.timing_mode.replace("-", "_")),
        workers=1 if args.single_thread else args.workers,
    )


def cmd_experiment(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    report = run_experiment(config)
    rows = [r.as_dict() for r in report.rows]
    out = sys.stdout if args.output == "-" else open(args.output, "w", newline="")
    try:
        if args.format == "csv":
            names = [f.name for f in dataclasses.fields(TrialRow)]
            writer = csv.DictWriter(out, fieldnames=names)
            writer.writeheader()
            writer.writerows(rows)
        else:
            for row in rows:
                out.write(json.dumps(row) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    for key, value in report.summary.items():
        print(f"{key} = {value}", file=sys.stderr)
    return EXIT_OK


def cmd_sizing(args: argparse.Namespace) -> int:
    if args.errors is None:
        raise ParameterError("sizing needs --errors")
    if args.errors == 0:
        print("error bound 0: nothing to correct, no table needed (m = 0)", file=sys.stderr)
        print("m = 0")
        print(f"patch_bytes = {HEADER_SIZE}")
        return EXIT_OK
    m = size_table(args.errors, args.k, args.slack)
    c_k = threshold(args.k)
    if args.slack < c_k + 0.02:
        print(
            f"warning: slack {args.slack} is within 0.02 of the load threshold "
            f"{c_k:.4f} for k={args.k}; finite tables fail noticeably more often there",
            file=sys.stderr,
        )
    params = CodecParams(
        symbol_width=args.symbol_bits,
        position_width=args.position_bits,
        k=args.k,
        m=m,
        checksum_bits=args.checksum_bits,
        seed=args.seed,
    )
    ov = biff_overhead_factor(params, args.errors)
    print(f"m = {m}")
    print(f"patch_bytes = {patch_size_bytes(params)}")
    print(f"overhead_factor = {ov.naive_factor:.2f}")
    print(f"overhead_factor_excluding_positions = {ov.inherent_factor:.2f}")
    return EXIT_OK


def _add_table_flags(
    sub: argparse.ArgumentParser, seed_default: int, file_widths: bool = False
) -> None:
    if file_widths:
        sub.add_argument("--symbol-bits", type=int, default=32, choices=_FILE_WIDTHS,
                         help="symbol width; whole bytes so files slice cleanly")
    else:
        sub.add_argument("--symbol-bits", type=int, default=20,
                         help="symbol width in bits")
    sub.add_argument("--k", type=int, default=4, help="hash functions / subtables")
    sub.add_argument("--cells", type=int, default=None, help="total cells m (multiple of k)")
    sub.add_argument("--errors", type=int, default=None, help="error bound E used for sizing")
    sub.add_argument("--slack", type=float, default=1.30,
                     help="cells per table pair relative to 2E (default 1.30)")
    sub.add_argument("--checksum", choices=("hash", "poly"), default="hash",
                     help="per-cell checksum family")
    sub.add_argument("--checksum-bits", type=int, default=32)
    sub.add_argument("--seed", type=int, default=seed_default)


def build_parser() -> argparse.ArgumentParser:
    seed_default = _env_seed()
    parser = argparse.ArgumentParser(
        prog="biff",
        description="Patch-based error correction for large symbol sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="build a patch file for a payload file")
    enc.add_argument("input", help="payload file")
    enc.add_argument("patch", help="patch file to write")
    _add_table_flags(enc, seed_default, file_widths=True)
    enc.set_defaults(func=cmd_encode)

    dec = sub.add_parser("decode", help="repair a corrupted payload with its patch")
    dec.add_argument("input", help="possibly corrupted payload file")
    dec.add_argument("patch", help="patch file written by encode")
    dec.add_argument("output", help="repaired payload file to write")
    dec.set_defaults(func=cmd_decode)

    exp = sub.add_parser("experiment", help="run recovery/timing trials")
    exp.add_argument("--kind", choices=[k.value for k in ExperimentKind], default="threshold")
    exp.add_argument("--trials", type=int, default=100)
    exp.add_argument("--n", type=int, default=10**6, help="message symbols per trial")
    exp.add_argument("--cell-errors", type=int, default=0,
                     help="whole corrupted table cells per trial")
    exp.add_argument("--burst-len", type=int, default=0)
    exp.add_argument("--burst-count", type=int, default=0)
    exp.add_argument("--engine", choices=("delta", "full"), default=None,
                     help="delta builds only the difference table; full runs the whole pipeline")
    exp.add_argument("--timing-mode", choices=("synthetic", "with-hash", "with_hash"),
                     default="synthetic")
    exp.add_argument("--workers", type=int, default=max(1, min(8, os.cpu_count() or 1)))
    exp.add_argument("--single-thread", action="store_true",
                     help="force sequential trials (stable timing)")
    exp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    exp.add_argument("--output", default="-", help="row destination, - for stdout")
    _add_table_flags(exp, seed_default)
    exp.set_defaults(func=cmd_experiment)

    siz = sub.add_parser("sizing", help="table size and overhead for an error bound")
    siz.add_argument("--position-bits", type=int, default=20,
                     help="position field width used for the byte estimate")
    _add_table_flags(siz, seed_default)
    siz.set_defaults(func=cmd_sizing)

    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except ParameterError as exc:
        # a garbage BIFF_SEED surfaces before any arguments are parsed
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PatchFormatError as exc:
        print(f"patch format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParameterError, BiffError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
