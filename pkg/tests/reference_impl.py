"""Plain-Python reference implementations the tests compare against.

Everything here is written from the documented contracts (PRF stream,
field layout, checksum families, cell semantics) without importing any
internals from the package, so agreement is meaningful.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

KEY_SPREAD = 0x9E3779B97F4A7C15
BLOCK_STEP = 0xD6E8FEB86659FD93
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB


def ref_prf64(key: int, seed: int, block: int = 0) -> int:
    z = (key * KEY_SPREAD) & MASK64
    z ^= seed
    z = (z + block * BLOCK_STEP) & MASK64
    z ^= z >> 30
    z = (z * MIX_1) & MASK64
    z ^= z >> 27
    z = (z * MIX_2) & MASK64
    z ^= z >> 31
    return z


def ref_index_bits(subtable_size: int) -> int:
    if subtable_size <= 1:
        return 0
    if subtable_size & (subtable_size - 1) == 0:
        return (subtable_size - 1).bit_length()
    return 32


def ref_field_slots(k: int, subtable_size: int, checksum_bits: int):
    """(block, shift) per index field plus the checksum slot."""
    width = ref_index_bits(subtable_size)
    slots = []
    cursor = 0
    for w in [width] * k + [checksum_bits]:
        if 64 - (cursor % 64) < w:
            cursor = (cursor // 64 + 1) * 64
        slots.append((cursor // 64, cursor % 64))
        cursor += w
    return slots[:-1], slots[-1], width


def ref_indices(packed: int, seed: int, k: int, subtable_size: int, checksum_bits: int):
    """Local cell index per subtable, by direct field extraction."""
    fields, _, width = ref_field_slots(k, subtable_size, checksum_bits)
    mask = (1 << width) - 1
    out = []
    for block, shift in fields:
        chunk = (ref_prf64(packed, seed, block) >> shift) & mask
        out.append((chunk * subtable_size) >> width)
    return out


def ref_checksum(packed: int, seed: int, k: int, subtable_size: int,
                 checksum_bits: int, flavor: str, symbol_bits: int) -> int:
    mask = (1 << checksum_bits) - 1
    if flavor == "poly":
        position = packed >> symbol_bits
        value = packed & ((1 << symbol_bits) - 1)
        # position here is the stored field, i.e. true position + 1
        pos = position - 1
        return (((2 * pos + 1) * value + pos * pos) & MASK64) & mask
    _, (block, shift), _ = ref_field_slots(k, subtable_size, checksum_bits)
    return (ref_prf64(packed, seed, block) >> shift) & mask


class RefTable:
    """Dict-free, loop-everything table used as a small-instance oracle."""

    def __init__(self, seed: int, k: int, subtable_size: int,
                 checksum_bits: int = 32, flavor: str = "hash", symbol_bits: int = 8):
        self.seed = seed
        self.k = k
        self.s = subtable_size
        self.b = checksum_bits
        self.flavor = flavor
        self.w = symbol_bits
        m = k * subtable_size
        self.key = [0] * m
        self.cs = [0] * m
        self.count = [0] * m

    def _pack(self, pos: int, val: int) -> int:
        return (pos + 1) << self.w | val

    def _cells(self, packed: int):
        for j, local in enumerate(ref_indices(packed, self.seed, self.k, self.s, self.b)):
            yield j * self.s + local

    def _apply(self, pos: int, val: int, delta: int):
        packed = self._pack(pos, val)
        csum = ref_checksum(packed, self.seed, self.k, self.s, self.b, self.flavor, self.w)
        for c in self._cells(packed):
            self.key[c] ^= packed
            self.cs[c] ^= csum
            self.count[c] += delta

    def insert(self, pos: int, val: int):
        self._apply(pos, val, 1)

    def delete(self, pos: int, val: int):
        self._apply(pos, val, -1)

    def nonzero_cells(self) -> int:
        return sum(1 for k_, c_ in zip(self.key, self.cs) if k_ or c_)

    def peel(self, position_bound: int):
        """Repeated full scans until no pure cell is left; returns packed keys."""
        recovered = []
        poisoned = set()
        progress = True
        while progress:
            progress = False
            for c in range(len(self.key)):
                if c in poisoned:
                    continue
                key = self.key[c]
                if key == 0:
                    continue
                if self.cs[c] != ref_checksum(key, self.seed, self.k, self.s,
                                              self.b, self.flavor, self.w):
                    continue
                pos_plus_1 = key >> self.w
                if not 1 <= pos_plus_1 <= position_bound:
                    poisoned.add(c)
                    continue
                recovered.append(key)
                csum = ref_checksum(key, self.seed, self.k, self.s, self.b,
                                    self.flavor, self.w)
                for cc in self._cells(key):
                    self.key[cc] ^= key
                    self.cs[cc] ^= csum
                progress = True
        # parity filter: a key listed an even number of times cancelled out
        keep = []
        for key in recovered:
            if recovered.count(key) % 2 == 1 and key not in keep:
                keep.append(key)
        return keep
