"""Invertible Bloom lookup table over (position, value) pairs.

A table is m = k * subtable_size cells; each pair lands in exactly one
cell per subtable.  Cells accumulate XORs of packed keys and of their
b-bit checksums, plus an optional signed count.  Listing works either by
checksum gating (peel) or by count == 1 (list_with_counts).

Tables are single-writer: insert, delete, peel, and listing require
exclusive access.  Distinct tables may be used concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ParameterError
from .hashing import ChecksumFlavor, HashConfig, checksum_value, derive_cell_indices, hash_pairs, layout_for

_NO_COUNTS = np.zeros(1, np.int64)


@dataclass(frozen=True, order=True)
class PairKey:
    """One (position, value) pair.

    Packed form is (position + 1) << symbol_bits | value, so the packed
    word is never zero and an empty cell is distinguishable from a cell
    holding the zero pair.  position + 1 must fit in the bits left above
    the value field.
    """

    position: int
    value: int

    def __post_init__(self):
        if self.position < 0:
            raise ParameterError(f"position must be nonnegative, got {self.position}")
        if self.value < 0:
            raise ParameterError(f"value must be nonnegative, got {self.value}")

    def pack(self, symbol_bits: int) -> int:
        if self.value >> symbol_bits:
            raise ParameterError(f"value {self.value} does not fit in {symbol_bits} bits")
        packed = (self.position + 1) << symbol_bits | self.value
        if packed >> 64:
            raise ParameterError(f"position {self.position} overflows the packed word")
        return packed

    @classmethod
    def unpack(cls, packed: int, symbol_bits: int) -> "PairKey":
        return cls((packed >> symbol_bits) - 1, packed & ((1 << symbol_bits) - 1))


@dataclass(frozen=True)
class Cell:
    """Read-only view of one cell."""

    key_sum: int
    value_sum: int
    count: int | None = None


@dataclass(frozen=True)
class PeelResult:
    """Outcome of a listing pass.

    recovered holds the decoded pairs; signs[i] is the sign of the
    recovered pair's cell count (+1 insert-heavy, -1 delete-heavy) when
    the table carries counts, else 0.  residual_cells counts cells left
    nonzero, anomalies counts pure-test passes that decoded to an invalid
    key (those cells are poisoned, not revisited).  aborted is set only
    if internal safety caps were hit, which indicates checksum-collision
    livelock and should never happen with b >= 32.
    """

    recovered: tuple[PairKey, ...]
    signs: tuple[int, ...]
    residual_cells: int
    anomalies: int
    aborted: bool = False

    @property
    def complete(self) -> bool:
        return self.residual_cells == 0 and not self.aborted


class IbltTable:
    """The mutable table. See module docstring for the cell model."""

    __slots__ = ("cfg", "flavor", "symbol_bits", "counting", "key_sums", "value_sums", "counts", "_layout", "_fblock", "_fshift")

    def __init__(
        self,
        cfg: HashConfig,
        symbol_bits: int,
        flavor: ChecksumFlavor = ChecksumFlavor.HASH,
        counting: bool = False,
    ):
        if not 1 <= symbol_bits <= 62:
            raise ParameterError(f"symbol_bits must be in [1, 62], got {symbol_bits}")
        self.cfg = cfg
        self.flavor = ChecksumFlavor(flavor)
        self.symbol_bits = symbol_bits
        self.counting = counting
        self.key_sums = np.zeros(cfg.m, np.uint64)
        self.value_sums = np.zeros(cfg.m, np.uint64)
        self.counts = np.zeros(cfg.m, np.int64) if counting else None
        self._layout = layout_for(cfg)
        self._fblock = np.asarray(self._layout.field_block, np.int64)
        self._fshift = np.asarray(self._layout.field_shift, np.int64)

    @property
    def m(self) -> int:
        return self.cfg.m

    def copy(self) -> "IbltTable":
        dup = IbltTable(self.cfg, self.symbol_bits, self.flavor, self.counting)
        dup.key_sums[:] = self.key_sums
        dup.value_sums[:] = self.value_sums
        if self.counting:
            dup.counts[:] = self.counts
        return dup

    def __eq__(self, other):
        if not isinstance(other, IbltTable):
            return NotImplemented
        return (
            self.cfg == other.cfg
            and self.flavor == other.flavor
            and self.symbol_bits == other.symbol_bits
            and self.counting == other.counting
            and bool(np.array_equal(self.key_sums, other.key_sums))
            and bool(np.array_equal(self.value_sums, other.value_sums))
            and (not self.counting or bool(np.array_equal(self.counts, other.counts)))
        )

    def is_empty(self) -> bool:
        if self.key_sums.any() or self.value_sums.any():
            return False
        return not (self.counting and self.counts.any())

    def nonzero_cells(self) -> int:
        return int(np.count_nonzero(self.key_sums | self.value_sums))

    def cell(self, index: int) -> Cell:
        return Cell(
            int(self.key_sums[index]),
            int(self.value_sums[index]),
            int(self.counts[index]) if self.counting else None,
        )

    # -- updates ---------------------------------------------------------

    def _checksum(self, packed: int) -> int:
        return checksum_value(packed, self.cfg, self.flavor, self.symbol_bits)

    def _apply_one(self, pair: PairKey, delta: int):
        if self.m == 0:
            raise ParameterError("table has no cells")
        packed = pair.pack(self.symbol_bits)
        csum = self._checksum(packed)
        for j, local in enumerate(derive_cell_indices(packed, self.cfg)):
            c = j * self.cfg.subtable_size + local
            self.key_sums[c] ^= np.uint64(packed)
            self.value_sums[c] ^= np.uint64(csum)
            if self.counting:
                self.counts[c] += delta

    def insert(self, pair: PairKey):
        """XOR one pair into its k cells (count += 1 in counting mode)."""
        self._apply_one(pair, 1)

    def delete(self, pair: PairKey):
        """Remove one pair: same XORs as insert, count -= 1."""
        self._apply_one(pair, -1)

    def _apply_packed(self, packed: np.ndarray, delta: int):
        if packed.size == 0:
            return
        if self.m == 0:
            raise ParameterError("table has no cells")
        gidx, csums = hash_pairs(packed, self.cfg, self.flavor, self.symbol_bits)
        if self.counting:
            _kernels.scatter_xor_counts(self.key_sums, self.value_sums, self.counts, gidx, packed, csums, delta)
        else:
            _kernels.scatter_xor(self.key_sums, self.value_sums, gidx, packed, csums)

    def _pack_arrays(self, positions, values) -> np.ndarray:
        positions = np.ascontiguousarray(positions, np.uint64)
        values = np.ascontiguousarray(values, np.uint64)
        if positions.shape != values.shape or positions.ndim != 1:
            raise ParameterError("positions and values must be 1-d arrays of equal length")
        if values.size and int(values.max()) >> self.symbol_bits:
            raise ParameterError(f"values do not fit in {self.symbol_bits} bits")
        if positions.size and (int(positions.max()) + 1) << self.symbol_bits >> 64:
            raise ParameterError("positions overflow the packed word")
        packed = np.empty(positions.size, np.uint64)
        _kernels.pack_keys(positions, values, self.symbol_bits, packed)
        return packed

    def insert_pairs(self, positions, values):
        """Bulk insert of parallel position/value arrays."""
        self._apply_packed(self._pack_arrays(positions, values), 1)

    def delete_pairs(self, positions, values):
        """Bulk delete of parallel position/value arrays."""
        self._apply_packed(self._pack_arrays(positions, values), -1)

    # -- listing ---------------------------------------------------------

    def _kernel_args(self):
        lay = self._layout
        return (
            np.uint64(self.cfg.seed),
            self.cfg.k,
            self.cfg.subtable_size,
            lay.idx_bits,
            self._fblock,
            self._fshift,
            lay.checksum_block,
            lay.checksum_shift,
            np.uint64((1 << self.cfg.checksum_bits) - 1),
            int(self.flavor),
            self.symbol_bits,
        )

    def peel_raw(self, position_bound: int | None = None):
        """peel() without the PairKey wrapping; the bulk decode path.

        Returns (packed keys uint64 array, signs int8 array, anomalies,
        aborted).  Keys are parity-filtered: a key popping out an even
        number of times has cancelled itself (possible only through a
        checksum collision) and is dropped.
        """
        if position_bound is None:
            position_bound = (1 << (64 - self.symbol_bits)) - 1
        out_keys = np.empty(2 * self.m + 16, np.uint64)
        out_signs = np.empty(out_keys.shape[0], np.int8)
        counts = self.counts if self.counting else _NO_COUNTS
        nrec, anomalies, aborted = _kernels.peel(
            self.key_sums,
            self.value_sums,
            counts,
            self.counting,
            *self._kernel_args(),
            np.uint64(position_bound),
            out_keys,
            out_signs,
        )
        keys = out_keys[:nrec]
        signs = out_signs[:nrec]
        # duplicates need a checksum collision, so a sorted adjacent-equal
        # probe almost always clears the full parity filter
        srt = np.sort(keys)
        if srt.size and bool(np.any(srt[1:] == srt[:-1])):
            uniq, first, hits = np.unique(keys, return_index=True, return_counts=True)
            order = np.sort(first[hits % 2 == 1])
            keys = keys[order]
            signs = signs[order]
        return keys.copy(), signs.copy(), int(anomalies), bool(aborted)

    def peel(self, position_bound: int | None = None) -> PeelResult:
        """Checksum-gated listing; consumes recoverable content in place.

        A pure cell (keySum != 0, valueSum == checksum(keySum)) yields one
        pair, which is removed from all k of its cells; the scan repeats
        through a worklist until no pure cell remains, O(m + recovered)
        total.  Pure cells decoding outside [0, position_bound) are
        counted as anomalies and poisoned.  Partial recovery shows up as
        residual_cells > 0, never as an error.
        """
        keys, signs, anomalies, aborted = self.peel_raw(position_bound)
        recovered = tuple(PairKey.unpack(int(x), self.symbol_bits) for x in keys)
        return PeelResult(
            recovered=recovered,
            signs=tuple(int(s) for s in signs),
            residual_cells=self.nonzero_cells(),
            anomalies=anomalies,
            aborted=aborted,
        )

    def list_with_counts(self) -> tuple[set[PairKey], bool]:
        """Count-driven listing for insert-only tables; consumes in place.

        Pops cells with count exactly 1.  Returns the recovered pairs and
        whether every count reached zero (complete listing).
        """
        if not self.counting:
            raise ParameterError("list_with_counts requires a counting-mode table")
        out_keys = np.empty(2 * self.m + 16, np.uint64)
        nrec, complete = _kernels.list_by_count(
            self.key_sums,
            self.value_sums,
            self.counts,
            *self._kernel_args(),
            out_keys,
        )
        pairs = {PairKey.unpack(int(x), self.symbol_bits) for x in out_keys[:nrec]}
        return pairs, bool(complete)

    # -- set algebra ------------------------------------------------------

    def subtract(self, other: "IbltTable"):
        """Fold another table into this one as a difference, in place.

        XOR is self-inverse, so key and checksum sums combine the same way
        for insert and delete; counts subtract.  Both tables must share
        configuration.
        """
        if (
            self.cfg != other.cfg
            or self.flavor != other.flavor
            or self.symbol_bits != other.symbol_bits
        ):
            raise ParameterError("cannot combine tables with different configurations")
        self.key_sums ^= other.key_sums
        self.value_sums ^= other.value_sums
        if self.counting and other.counting:
            self.counts -= other.counts
        elif self.counting != other.counting:
            raise ParameterError("cannot combine counting and non-counting tables")
