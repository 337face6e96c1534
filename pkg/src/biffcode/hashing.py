"""Seeded derivation of cell placements and checksums.

Everything a table needs for a key (one cell index per subtable, plus a
checksum) is drawn from one fixed, named PRF stream so that tables built by
different processes, machines, or releases agree bit for bit.  Patch files
written by one build must decode under any other, so the constructions below
are frozen; changing any constant is a wire-format break.

PRF stream ("splitmix64-ctr"), block ``j`` for a 64-bit ``key`` under a
64-bit ``seed``::

    z = key * 0x9E3779B97F4A7C15          mod 2**64
    z = z XOR seed
    z = z + j * 0xD6E8FEB86659FD93        mod 2**64
    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9   mod 2**64
    z ^= z >> 27;  z *= 0x94D049BB133111EB   mod 2**64
    z ^= z >> 31

(The tail is the splitmix64 finalizer; the leading multiply spreads
structured keys before seeding and block-tweaking.)

Field layout.  Blocks are consumed low bits first.  Each of the k cell
indices occupies a field of ``idx_bits`` bits: log2(subtable_size) when the
subtable size is a power of two, else a 32-bit slice reduced to
[0, subtable_size) by multiply-shift, ``(slice * size) >> idx_bits``, which
avoids the bias and division cost of a modulo.  The checksum field occupies
the next ``checksum_bits`` bits.  A field never straddles two blocks: when
the current block cannot hold it whole, it moves to the start of the next
block.  With k = 4, subtable_size = 1024, checksum_bits = 24, the whole
layout fits a single PRF block.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF

_KEY_SPREAD = 0x9E3779B97F4A7C15
_BLOCK_STEP = 0xD6E8FEB86659FD93
_MIX_1 = 0xBF58476D1CE4E5B9
_MIX_2 = 0x94D049BB133111EB


class ChecksumFlavor(enum.IntEnum):
    """How a key's checksum is computed.

    HASH draws checksum bits from the same PRF stream as the cell indices
    (disjoint bits).  POLY uses the invertible polynomial
    ``((2*position + 1) * value + position**2) mod 2**64`` truncated to the
    low checksum bits; it exists to replicate fixed-width-arithmetic
    experiment setups and is weaker than HASH against random cell damage.
    """

    HASH = 0
    POLY = 1


@dataclass(frozen=True)
class HashConfig:
    """Placement parameters: PRF seed, subtable count and size, checksum width."""

    seed: int
    k: int
    subtable_size: int
    checksum_bits: int = 32

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must fit in 64 bits")
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.subtable_size < 0:
            raise ValueError("subtable_size must be nonnegative")
        if self.subtable_size > 1 << 32:
            raise ValueError("subtable_size must fit in 32 bits")
        if not 8 <= self.checksum_bits <= 64:
            raise ValueError("checksum_bits must be in [8, 64]")

    @property
    def m(self) -> int:
        return self.k * self.subtable_size


@dataclass(frozen=True)
class FieldLayout:
    """Resolved bit positions of the k index fields and the checksum field."""

    idx_bits: int
    field_block: tuple[int, ...]  # per field, which PRF block
    field_shift: tuple[int, ...]  # per field, bit offset inside its block
    checksum_block: int
    checksum_shift: int
    n_blocks: int


def _mix64(z: int) -> int:
    z &= MASK64
    z ^= z >> 30
    z = (z * _MIX_1) & MASK64
    z ^= z >> 27
    z = (z * _MIX_2) & MASK64
    z ^= z >> 31
    return z


def prf64(key: int, seed: int, block: int = 0) -> int:
    """Block `block` of the splitmix64-ctr stream for (key, seed)."""
    z = (key * _KEY_SPREAD) & MASK64
    z ^= seed
    z = (z + block * _BLOCK_STEP) & MASK64
    return _mix64(z)


def index_bits(subtable_size: int) -> int:
    """Bits consumed per cell index: exact for powers of two, else 32."""
    if subtable_size <= 1:
        # cell 0 (or no cell at all) needs no index bits
        return 0
    if subtable_size & (subtable_size - 1) == 0:
        return (subtable_size - 1).bit_length()
    return 32


@lru_cache(maxsize=None)
def field_layout(k: int, subtable_size: int, checksum_bits: int) -> FieldLayout:
    """Assign each field a (block, shift); fields never straddle blocks."""
    idx_bits = index_bits(subtable_size)
    widths = [idx_bits] * k + [checksum_bits]
    blocks: list[int] = []
    shifts: list[int] = []
    cursor = 0
    for width in widths:
        if 64 - (cursor % 64) < width:
            cursor = (cursor // 64 + 1) * 64
        blocks.append(cursor // 64)
        shifts.append(cursor % 64)
        cursor += width
    return FieldLayout(
        idx_bits=idx_bits,
        field_block=tuple(blocks[:k]),
        field_shift=tuple(shifts[:k]),
        checksum_block=blocks[k],
        checksum_shift=shifts[k],
        n_blocks=(cursor + 63) // 64,
    )


def layout_for(cfg: HashConfig) -> FieldLayout:
    return field_layout(cfg.k, cfg.subtable_size, cfg.checksum_bits)


def derive_cell_indices(packed_key: int, cfg: HashConfig) -> tuple[int, ...]:
    """The key's local cell index in each of the k subtables.

    Index j addresses subtable j, so the k global locations are distinct by
    construction.  Pure function of (packed_key, cfg).
    """
    lay = layout_for(cfg)
    mask = (1 << lay.idx_bits) - 1
    out = []
    digest_block = -1
    digest = 0
    for j in range(cfg.k):
        blk = lay.field_block[j]
        if blk != digest_block:
            digest = prf64(packed_key, cfg.seed, blk)
            digest_block = blk
        chunk = (digest >> lay.field_shift[j]) & mask
        out.append((chunk * cfg.subtable_size) >> lay.idx_bits)
    return tuple(out)


def checksum_value(
    packed_key: int,
    cfg: HashConfig,
    flavor: ChecksumFlavor = ChecksumFlavor.HASH,
    symbol_bits: int | None = None,
) -> int:
    """The key's checksum, truncated to cfg.checksum_bits.

    POLY needs `symbol_bits` to split the packed key back into
    (position, value); HASH ignores it.
    """
    mask = (1 << cfg.checksum_bits) - 1
    if flavor == ChecksumFlavor.POLY:
        if symbol_bits is None:
            raise ValueError("POLY checksum requires symbol_bits")
        position = (packed_key >> symbol_bits) - 1
        value = packed_key & ((1 << symbol_bits) - 1)
        return ((2 * position + 1) * value + position * position) & mask
    lay = layout_for(cfg)
    digest = prf64(packed_key, cfg.seed, lay.checksum_block)
    return (digest >> lay.checksum_shift) & mask


def hash_pairs(
    packed_keys: np.ndarray,
    cfg: HashConfig,
    flavor: ChecksumFlavor = ChecksumFlavor.HASH,
    symbol_bits: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized placement: global cell indices [n, k] and checksums [n].

    Global index of subtable j's cell is ``j * subtable_size + local_index``.
    Bit-identical to the scalar functions above.
    """
    keys = np.ascontiguousarray(packed_keys, dtype=np.uint64)
    lay = layout_for(cfg)
    n = keys.shape[0]
    seed = np.uint64(cfg.seed)

    digests: dict[int, np.ndarray] = {}

    def digest_for(block: int) -> np.ndarray:
        if block not in digests:
            z = keys * np.uint64(_KEY_SPREAD)
            z ^= seed
            z += np.uint64((block * _BLOCK_STEP) & MASK64)
            z ^= z >> np.uint64(30)
            z *= np.uint64(_MIX_1)
            z ^= z >> np.uint64(27)
            z *= np.uint64(_MIX_2)
            z ^= z >> np.uint64(31)
            digests[block] = z
        return digests[block]

    idx_mask = np.uint64((1 << lay.idx_bits) - 1)
    size = np.uint64(cfg.subtable_size)
    shift = np.uint64(lay.idx_bits)
    gidx = np.empty((n, cfg.k), dtype=np.int64)
    for j in range(cfg.k):
        chunk = (digest_for(lay.field_block[j]) >> np.uint64(lay.field_shift[j])) & idx_mask
        local = (chunk * size) >> shift
        gidx[:, j] = local.astype(np.int64) + j * cfg.subtable_size

    csum_mask = np.uint64(((1 << cfg.checksum_bits) - 1) & MASK64)
    if flavor == ChecksumFlavor.POLY:
        if symbol_bits is None:
            raise ValueError("POLY checksum requires symbol_bits")
        w = np.uint64(symbol_bits)
        pos = (keys >> w) - np.uint64(1)
        val = keys & np.uint64((1 << symbol_bits) - 1)
        two = np.uint64(2)
        one = np.uint64(1)
        csums = ((two * pos + one) * val + pos * pos) & csum_mask
    else:
        csums = (digest_for(lay.checksum_block) >> np.uint64(lay.checksum_shift)) & csum_mask
    return gidx, csums
