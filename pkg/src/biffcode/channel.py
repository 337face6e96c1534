"""Reproducible error injection for messages and patch tables.

All corruptors are pure: they take an explicit numpy Generator, never
touch their inputs, and return the mutated copy together with the exact
ground truth, so trials parallelize by handing each its own seeded rng.
Corruption counts are exact (always "exactly E", never per-symbol
probability), which keeps acceptance statistics sharp.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .iblt import IbltTable


class ChannelModel(enum.Enum):
    UNIFORM = "uniform"
    BURST = "burst"
    TABLE_CORRUPT = "table_corrupt"


@dataclass(frozen=True)
class ChannelSpec:
    """One corruption recipe: which model, how much damage, which seed."""

    model: ChannelModel
    error_count: int = 0
    cell_error_count: int = 0
    burst_len: int = 0
    burst_count: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ("error_count", "cell_error_count", "burst_len", "burst_count"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")
        object.__setattr__(self, "model", ChannelModel(self.model))


def _mutate(values: np.ndarray, symbol_width: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw over the symbols NOT equal to each original value."""
    if symbol_width < 1:
        raise ParameterError("symbol_width must be positive")
    space = 1 << symbol_width
    if space < 2:
        raise ParameterError("cannot mutate 0-bit symbols")
    # draw from the space minus one element, then skip over the original
    r = rng.integers(0, space - 1, size=values.size, dtype=np.uint64)
    return r + (r >= values)


def corrupt_uniform(
    message: np.ndarray, error_count: int, rng: np.random.Generator, symbol_width: int
) -> tuple[np.ndarray, np.ndarray]:
    """Mutate exactly error_count distinct uniformly placed symbols.

    Every mutated value differs from the original (mutation errors; the
    message keeps its length and order).  Returns the mutated copy and
    the sorted ground-truth error positions.
    """
    message = np.asarray(message, np.uint64)
    if not 0 <= error_count <= message.size:
        raise ParameterError(f"error_count must be in [0, {message.size}], got {error_count}")
    positions = np.sort(rng.choice(message.size, size=error_count, replace=False)).astype(np.int64)
    mutated = message.copy()
    mutated[positions] = _mutate(message[positions], symbol_width, rng)
    return mutated, positions


def corrupt_burst(
    message: np.ndarray,
    burst_len: int,
    burst_count: int,
    rng: np.random.Generator,
    symbol_width: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Mutate burst_count non-overlapping runs of burst_len symbols each.

    Placement is uniform over all valid non-overlapping layouts: choose
    burst_count distinct values u_0 < ... < u_{c-1} from a shrunken range
    of n - c*(L-1) slots, then map start_i = u_i + i*(L-1), which is a
    bijection onto the ordered non-overlapping placements.
    """
    message = np.asarray(message, np.uint64)
    n = message.size
    if burst_count == 0 or burst_len == 0:
        return message.copy(), np.empty(0, np.int64)
    if burst_count * burst_len > n:
        raise ParameterError(
            f"{burst_count} bursts of {burst_len} do not fit in {n} symbols"
        )
    shrunk = n - burst_count * (burst_len - 1)
    u = np.sort(rng.choice(shrunk, size=burst_count, replace=False))
    starts = u + np.arange(burst_count) * (burst_len - 1)
    positions = (starts[:, None] + np.arange(burst_len)[None, :]).ravel().astype(np.int64)
    mutated = message.copy()
    mutated[positions] = _mutate(message[positions], symbol_width, rng)
    return mutated, positions


def corrupt_table(
    patch: IbltTable,
    cell_count: int,
    rng: np.random.Generator,
    key_bits: int = 64,
) -> tuple[IbltTable, np.ndarray]:
    """Replace exactly cell_count distinct cells with random words.

    Each chosen cell's keySum and valueSum are redrawn uniformly (keySum
    over key_bits bits, valueSum over the table's checksum width) until
    the cell differs from its original content, so every listed address
    is genuinely corrupted.  Counts, when present, are left alone: any
    keySum/valueSum disturbance already defeats the pure-cell test.
    """
    if not 0 <= cell_count <= patch.m:
        raise ParameterError(f"cell_count must be in [0, {patch.m}], got {cell_count}")
    if not 1 <= key_bits <= 64:
        raise ParameterError(f"key_bits must be in [1, 64], got {key_bits}")
    mutated = patch.copy()
    cells = np.sort(rng.choice(patch.m, size=cell_count, replace=False)).astype(np.int64)
    if cell_count == 0:
        return mutated, cells
    key_hi = 1 << key_bits
    csum_hi = 1 << patch.cfg.checksum_bits
    new_keys = rng.integers(0, key_hi, size=cell_count, dtype=np.uint64)
    new_vals = rng.integers(0, csum_hi, size=cell_count, dtype=np.uint64)
    while True:
        same = (mutated.key_sums[cells] == new_keys) & (mutated.value_sums[cells] == new_vals)
        hits = int(np.count_nonzero(same))
        if not hits:
            break
        new_keys[same] = rng.integers(0, key_hi, size=hits, dtype=np.uint64)
        new_vals[same] = rng.integers(0, csum_hi, size=hits, dtype=np.uint64)
    mutated.key_sums[cells] = new_keys
    mutated.value_sums[cells] = new_vals
    return mutated, cells


def apply_channel(
    spec: ChannelSpec,
    message: np.ndarray,
    patch: IbltTable,
    symbol_width: int,
    key_bits: int = 64,
) -> tuple[np.ndarray, IbltTable, np.ndarray, np.ndarray]:
    """Run one ChannelSpec: returns (message', patch', error positions, cells)."""
    rng = np.random.default_rng(spec.seed)
    cells = np.empty(0, np.int64)
    if spec.model is ChannelModel.UNIFORM:
        mutated, positions = corrupt_uniform(message, spec.error_count, rng, symbol_width)
    elif spec.model is ChannelModel.BURST:
        mutated, positions = corrupt_burst(
            message, spec.burst_len, spec.burst_count, rng, symbol_width
        )
    else:
        mutated, positions = message.copy(), np.empty(0, np.int64)
    out_patch = patch
    if spec.model is ChannelModel.TABLE_CORRUPT or spec.cell_error_count:
        out_patch, cells = corrupt_table(patch, spec.cell_error_count, rng, key_bits)
    return mutated, out_patch, positions, cells
