"""Randomized trial runner for threshold, failure, timing, and burst studies.

Each trial owns its rng, seeded as base_seed + trial_index, so results
are reproducible and independent of scheduling.  Two engines exist:

* full: generate the whole message, encode it, push it through the
  channel, and run the real decode.  The reference semantics.
* delta: build the decoder's post-deletion table directly from the drawn
  error set.  Deleting all received pairs from the patch cancels every
  untouched position, so the working table equals the XOR of the error
  positions' original and mutated pairs; cell corruption commutes with
  that cancellation (a uniformly redrawn cell XORed with fixed content
  is still uniform).  The delta engine therefore samples the same
  outcome distribution at a small fraction of the cost, and the full
  engine is kept for bit-level cross-checks.

Success is judged the way a caller would: the corrected output equals
the original message.  For clean-patch runs that coincides with the
table peeling to empty.
"""

from __future__ import annotations

import enum
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import _kernels
from .analysis import expected_unrecoverable, poisson_interval
from .channel import _mutate, corrupt_table, corrupt_uniform
from .codec import CodecParams, decode, encode
from .errors import ParameterError
from .hashing import ChecksumFlavor, hash_pairs

_TABLE_SEED_BOUND = 1 << 63


class ExperimentKind(enum.Enum):
    THRESHOLD = "threshold"
    FAILURE = "failure"
    TIMING = "timing"
    BURST = "burst"


class TimingMode(enum.Enum):
    # the reported decode stages either include every per-symbol hash
    # evaluation or work from indices prepared outside the clock
    WITH_HASH = "with_hash"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class ExperimentConfig:
    kind: ExperimentKind
    trials: int
    n: int
    m: int
    k: int = 4
    error_count: int = 0
    cell_error_count: int = 0
    burst_len: int = 0
    burst_count: int = 0
    symbol_width: int = 20
    checksum_bits: int = 32
    checksum_flavor: ChecksumFlavor = ChecksumFlavor.HASH
    base_seed: int = 0
    engine: str = "delta"
    timing_mode: TimingMode = TimingMode.SYNTHETIC
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "timing_mode", TimingMode(self.timing_mode))
        if self.trials < 0:
            raise ParameterError("trials must be nonnegative")
        if self.n < 1:
            raise ParameterError("n must be positive")
        if self.engine not in ("delta", "full"):
            raise ParameterError(f"engine must be delta or full, got {self.engine!r}")
        if self.kind is ExperimentKind.TIMING and self.engine != "full":
            raise ParameterError("timing experiments require the full engine")
        if self.kind is ExperimentKind.BURST and self.burst_len * self.burst_count == 0:
            raise ParameterError("burst experiments need burst_len and burst_count")
        if self.workers < 1:
            raise ParameterError("workers must be at least 1")
        self.params_for(0)  # surface width/size violations now

    @property
    def position_width(self) -> int:
        return max(self.n.bit_length(), 1)

    def params_for(self, table_seed: int) -> CodecParams:
        return CodecParams(
            symbol_width=self.symbol_width,
            position_width=self.position_width,
            k=self.k,
            m=self.m,
            checksum_bits=self.checksum_bits,
            seed=table_seed,
            flavor=self.checksum_flavor,
        )


@dataclass(frozen=True)
class TrialRow:
    trial: int
    table_seed: int
    success: bool
    corrections: int
    residual_cells: int
    anomalies: int
    unrecovered: int
    stage1_seconds: float
    stage2_seconds: float

    def __post_init__(self):
        # trials hand numpy scalars around; rows must serialize as plain json
        for name in ("trial", "table_seed", "corrections", "residual_cells", "anomalies", "unrecovered"):
            object.__setattr__(self, name, int(getattr(self, name)))
        object.__setattr__(self, "success", bool(self.success))
        object.__setattr__(self, "stage1_seconds", float(self.stage1_seconds))
        object.__setattr__(self, "stage2_seconds", float(self.stage2_seconds))

    def as_dict(self) -> dict:
        return {
            "trial": self.trial,
            "table_seed": self.table_seed,
            "success": self.success,
            "corrections": self.corrections,
            "residual_cells": self.residual_cells,
            "anomalies": self.anomalies,
            "unrecovered": self.unrecovered,
            "stage1_seconds": self.stage1_seconds,
            "stage2_seconds": self.stage2_seconds,
        }


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    rows: tuple[TrialRow, ...]
    summary: dict = field(compare=False)


def _draw_error_positions(config: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    if config.kind is ExperimentKind.BURST:
        c, length = config.burst_count, config.burst_len
        if c * length > config.n:
            raise ParameterError("bursts do not fit in the message")
        shrunk = config.n - c * (length - 1)
        u = np.sort(rng.choice(shrunk, size=c, replace=False))
        starts = u + np.arange(c) * (length - 1)
        return (starts[:, None] + np.arange(length)[None, :]).ravel()
    return np.sort(rng.choice(config.n, size=config.error_count, replace=False))


def _delta_trial(config: ExperimentConfig, trial: int) -> TrialRow:
    """One trial on the post-deletion difference table directly."""
    rng = np.random.default_rng(config.base_seed + trial)
    table_seed = int(rng.integers(0, _TABLE_SEED_BOUND))
    params = config.params_for(table_seed)

    positions = _draw_error_positions(config, rng).astype(np.uint64)
    originals = rng.integers(0, 1 << config.symbol_width, size=positions.size, dtype=np.uint64)
    mutated = _mutate(originals, config.symbol_width, rng)

    t0 = time.perf_counter()
    work = params.new_table()
    work.insert_pairs(positions, originals)
    work.delete_pairs(positions, mutated)
    if config.cell_error_count:
        work, _ = corrupt_table(work, config.cell_error_count, rng)
    t1 = time.perf_counter()
    keys, _, anomalies, aborted = work.peel_raw(position_bound=config.n)
    t2 = time.perf_counter()

    w = config.symbol_width
    orig_keys = np.empty(positions.size, np.uint64)
    mut_keys = np.empty(positions.size, np.uint64)
    _kernels.pack_keys(positions, originals, w, orig_keys)
    _kernels.pack_keys(positions, mutated, w, mut_keys)
    keys_sorted = np.sort(keys)
    recovered_orig = np.isin(orig_keys, keys_sorted, assume_unique=False)
    unrecovered = int(positions.size - np.count_nonzero(recovered_orig))
    legit = np.isin(keys_sorted, np.concatenate([orig_keys, mut_keys]))
    junk = int(keys_sorted.size - np.count_nonzero(legit))
    residual = work.nonzero_cells()

    message_ok = unrecovered == 0 and junk == 0 and not aborted
    if config.cell_error_count:
        success = message_ok
    else:
        success = message_ok and residual == 0
    return TrialRow(
        trial=trial,
        table_seed=table_seed,
        success=success,
        corrections=int(np.count_nonzero(recovered_orig)),
        residual_cells=residual,
        anomalies=anomalies,
        unrecovered=unrecovered,
        stage1_seconds=t1 - t0,
        stage2_seconds=t2 - t1,
    )


def _full_trial(config: ExperimentConfig, trial: int) -> TrialRow:
    """One trial through encode, channel, and the real decode."""
    rng = np.random.default_rng(config.base_seed + trial)
    table_seed = int(rng.integers(0, _TABLE_SEED_BOUND))
    params = config.params_for(table_seed)

    message = rng.integers(0, 1 << config.symbol_width, size=config.n, dtype=np.uint64)
    patch = encode(message, params)
    if config.kind is ExperimentKind.BURST:
        positions = _draw_error_positions(config, rng)
        received = message.copy()
        received[positions] = _mutate(message[positions], config.symbol_width, rng)
    else:
        received, positions = corrupt_uniform(
            message, config.error_count, rng, config.symbol_width
        )
    if config.cell_error_count:
        patch, _ = corrupt_table(patch, config.cell_error_count, rng)

    corrected, report = decode(received, patch, params)
    wrong = int(np.count_nonzero(corrected != message))
    return TrialRow(
        trial=trial,
        table_seed=table_seed,
        success=wrong == 0 and (config.cell_error_count > 0 or report.success),
        corrections=len(report.corrections),
        residual_cells=report.residual_cells,
        anomalies=report.anomalies,
        unrecovered=wrong,
        stage1_seconds=report.delete_seconds,
        stage2_seconds=report.peel_seconds,
    )


def _timing_trial(config: ExperimentConfig, trial: int) -> TrialRow:
    """One timed decode; stage boundaries match the decode structure.

    Stage 1 covers building the working table (copy plus the deletion
    pass over all n received pairs), stage 2 the peel and the correction
    assembly.  In SYNTHETIC mode the cell indices and checksums are
    prepared before the clock starts, isolating table work from hash
    throughput; WITH_HASH times the stock decode, whose deletion pass
    includes every per-symbol hash evaluation.
    """
    rng = np.random.default_rng(config.base_seed + trial)
    table_seed = int(rng.integers(0, _TABLE_SEED_BOUND))
    params = config.params_for(table_seed)
    message = rng.integers(0, 1 << config.symbol_width, size=config.n, dtype=np.uint64)
    patch = encode(message, params)
    received, _ = corrupt_uniform(message, config.error_count, rng, config.symbol_width)

    if config.timing_mode is TimingMode.WITH_HASH:
        corrected, report = decode(received, patch, params)
        stage1, stage2 = report.delete_seconds, report.peel_seconds
        wrong = int(np.count_nonzero(corrected != message))
        return TrialRow(
            trial=trial,
            table_seed=table_seed,
            success=wrong == 0 and report.success,
            corrections=len(report.corrections),
            residual_cells=report.residual_cells,
            anomalies=report.anomalies,
            unrecovered=wrong,
            stage1_seconds=stage1,
            stage2_seconds=stage2,
        )

    # indices and checksums are prepared before the clock; the deletion
    # pass still does its own non-hash work (forming the packed pair
    # words and the table updates), and corrections land in place on the
    # received sequence when peeling terminates
    positions = np.arange(config.n, dtype=np.uint64)
    packed_pre = np.empty(config.n, np.uint64)
    _kernels.pack_keys(positions, received, config.symbol_width, packed_pre)
    gidx, csums = hash_pairs(packed_pre, patch.cfg, patch.flavor, config.symbol_width)
    packed = np.empty(config.n, np.uint64)
    corrected = received.copy()

    t0 = time.perf_counter()
    work = patch.copy()
    _kernels.pack_keys(positions, received, config.symbol_width, packed)
    _kernels.scatter_xor(work.key_sums, work.value_sums, gidx, packed, csums)
    t1 = time.perf_counter()
    keys, _, anomalies, aborted = work.peel_raw(position_bound=config.n)
    rec_pos = (keys >> np.uint64(config.symbol_width)) - np.uint64(1)
    rec_val = keys & np.uint64((1 << config.symbol_width) - 1)
    changed = rec_val != corrected[rec_pos]
    corrected[rec_pos[changed]] = rec_val[changed]
    t2 = time.perf_counter()

    residual = work.nonzero_cells()
    wrong = int(np.count_nonzero(corrected != message))
    return TrialRow(
        trial=trial,
        table_seed=table_seed,
        success=wrong == 0 and residual == 0 and not aborted,
        corrections=int(np.count_nonzero(changed)),
        residual_cells=residual,
        anomalies=anomalies,
        unrecovered=wrong,
        stage1_seconds=t1 - t0,
        stage2_seconds=t2 - t1,
    )


def _trial_fn(config: ExperimentConfig) -> Callable[[ExperimentConfig, int], TrialRow]:
    if config.kind is ExperimentKind.TIMING:
        return _timing_trial
    return _full_trial if config.engine == "full" else _delta_trial


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run all trials and assemble the summary."""
    fn = _trial_fn(config)
    indices = range(config.trials)
    if config.workers > 1 and config.kind is not ExperimentKind.TIMING:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            rows = tuple(pool.map(lambda t: fn(config, t), indices))
    else:
        rows = tuple(fn(config, t) for t in indices)
    return ExperimentReport(config=config, rows=rows, summary=summarize(config, rows))


def summarize(config: ExperimentConfig, rows: tuple[TrialRow, ...]) -> dict:
    successes = sum(r.success for r in rows)
    failures = len(rows) - successes
    summary = {
        "kind": config.kind.value,
        "trials": len(rows),
        "successes": successes,
        "failures": failures,
        "success_rate": successes / len(rows) if rows else None,
    }
    if rows:
        for stage in ("stage1_seconds", "stage2_seconds"):
            vals = sorted(getattr(r, stage) for r in rows)
            summary[f"{stage}_mean"] = statistics.fmean(vals)
            summary[f"{stage}_median"] = statistics.median(vals)
            summary[f"{stage}_p90"] = vals[min(len(vals) - 1, math.ceil(0.9 * len(vals)) - 1)]
    if config.cell_error_count and config.m and rows:
        z = config.cell_error_count / config.m
        lam = expected_unrecoverable(config.error_count, z, config.k) * len(rows)
        summary["expected_failures"] = lam
        summary["poisson_99_interval"] = poisson_interval(lam, 0.99)
        single = sum(1 for r in rows if not r.success and r.unrecovered == 1)
        summary["single_symbol_failures"] = single
        summary["single_symbol_fraction"] = single / failures if failures else None
    return summary


def two_proportion_z(wins_a: int, n_a: int, wins_b: int, n_b: int) -> tuple[float, float]:
    """Two-sided two-proportion z-test; returns (z, p_value).

    Pooled-variance form; with zero pooled variance the proportions are
    identical and the test degenerates to (0, 1).
    """
    if min(n_a, n_b) <= 0:
        raise ParameterError("sample sizes must be positive")
    p_a, p_b = wins_a / n_a, wins_b / n_b
    pool = (wins_a + wins_b) / (n_a + n_b)
    var = pool * (1 - pool) * (1 / n_a + 1 / n_b)
    if var == 0:
        return 0.0, 1.0
    z = (p_a - p_b) / math.sqrt(var)
    return z, 2 * float(stats.norm.sf(abs(z)))
