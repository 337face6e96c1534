"""Compiled hot loops: bulk XOR scatter and the two listing procedures.

The PRF here must stay bit-identical to hashing.prf64; tests enforce it.
All table-word arithmetic is uint64 with C wrap semantics.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

_KEY_SPREAD = uint64(0x9E3779B97F4A7C15)
_BLOCK_STEP = uint64(0xD6E8FEB86659FD93)
_MIX_1 = uint64(0xBF58476D1CE4E5B9)
_MIX_2 = uint64(0x94D049BB133111EB)

FLAVOR_HASH = 0
FLAVOR_POLY = 1


@njit(cache=True, inline="always")
def _prf64(key, seed, block):
    z = key * _KEY_SPREAD
    z ^= seed
    z = z + uint64(block) * _BLOCK_STEP
    z ^= z >> uint64(30)
    z *= _MIX_1
    z ^= z >> uint64(27)
    z *= _MIX_2
    z ^= z >> uint64(31)
    return z


@njit(cache=True, inline="always")
def _checksum_of(key, seed, flavor, cs_block, cs_shift, cs_mask, symbol_bits):
    if flavor == FLAVOR_POLY:
        w = uint64(symbol_bits)
        pos = (key >> w) - uint64(1)
        val = key & ((uint64(1) << w) - uint64(1))
        return ((uint64(2) * pos + uint64(1)) * val + pos * pos) & uint64(cs_mask)
    return (_prf64(key, seed, cs_block) >> uint64(cs_shift)) & uint64(cs_mask)


@njit(cache=True, nogil=True)
def scatter_xor(key_sums, value_sums, gidx, keys, csums):
    """XOR each key/checksum into its k cells. Insert and delete alike."""
    n, k = gidx.shape
    for i in range(n):
        key = keys[i]
        cs = csums[i]
        for j in range(k):
            c = gidx[i, j]
            key_sums[c] ^= key
            value_sums[c] ^= cs


@njit(cache=True, nogil=True)
def scatter_xor_counts(key_sums, value_sums, counts, gidx, keys, csums, delta):
    """Counting-mode variant: also moves each touched cell's count by delta."""
    n, k = gidx.shape
    for i in range(n):
        key = keys[i]
        cs = csums[i]
        for j in range(k):
            c = gidx[i, j]
            key_sums[c] ^= key
            value_sums[c] ^= cs
            counts[c] += delta


@njit(cache=True, nogil=True)
def peel(
    key_sums,
    value_sums,
    counts,
    use_counts,
    seed,
    k,
    subtable_size,
    idx_bits,
    field_block,
    field_shift,
    cs_block,
    cs_shift,
    cs_mask,
    flavor,
    symbol_bits,
    max_pos_plus_1,
    out_keys,
    out_signs,
):
    """Checksum-gated peeling, in place.

    A cell is pure when its keySum is nonzero and the checksum of that
    keySum equals its valueSum.  Candidate cell addresses live on a queue
    seeded by one scan; every pop re-verifies purity because earlier
    removals may have changed the cell.  A pure cell whose keySum decodes
    outside the valid key range is counted as an anomaly, poisoned, and
    never revisited.  Returns (recovered, anomalies, aborted); aborted is
    nonzero only if the safety caps were hit (checksum-collision livelock).
    """
    m = key_sums.shape[0]
    idx_mask = (uint64(1) << uint64(idx_bits)) - uint64(1)
    size = uint64(subtable_size)
    sseed = uint64(seed)
    w = uint64(symbol_bits)
    maxp = uint64(max_pos_plus_1)

    cap = out_keys.shape[0]
    queue = np.empty(m + k * cap + 8, np.int64)
    poisoned = np.zeros(m, np.uint8)
    in_queue = np.zeros(m, np.uint8)
    head = 0
    tail = 0
    for c in range(m):
        key = key_sums[c]
        if key != uint64(0) and value_sums[c] == _checksum_of(
            key, sseed, flavor, cs_block, cs_shift, cs_mask, w
        ):
            queue[tail] = c
            in_queue[c] = 1
            tail += 1

    nrec = 0
    anomalies = 0
    aborted = 0
    max_pops = 16 * m + 64
    pops = 0
    while head < tail:
        pops += 1
        if pops > max_pops:
            aborted = 1
            break
        c = queue[head]
        head += 1
        in_queue[c] = 0
        if poisoned[c]:
            continue
        key = key_sums[c]
        if key == uint64(0):
            continue
        if value_sums[c] != _checksum_of(key, sseed, flavor, cs_block, cs_shift, cs_mask, w):
            continue
        pos_plus_1 = key >> w
        if pos_plus_1 == uint64(0) or pos_plus_1 > maxp:
            anomalies += 1
            poisoned[c] = 1
            continue
        if nrec >= cap:
            aborted = 1
            break
        out_keys[nrec] = key
        if use_counts:
            cnt = counts[c]
            sign = 1 if cnt > 0 else (-1 if cnt < 0 else 0)
        else:
            sign = 0
        out_signs[nrec] = sign
        nrec += 1
        # the pure test just verified value_sums[c] == checksum(key)
        cs = value_sums[c]
        digest_block = -1
        digest = uint64(0)
        for j in range(k):
            blk = field_block[j]
            if blk != digest_block:
                digest = _prf64(key, sseed, blk)
                digest_block = blk
            chunk = (digest >> uint64(field_shift[j])) & idx_mask
            local = (chunk * size) >> uint64(idx_bits)
            cc = np.int64(local) + j * subtable_size
            key_sums[cc] ^= key
            value_sums[cc] ^= cs
            if use_counts:
                counts[cc] -= sign
            # purity needs keySum != 0, so emptied cells can't requalify;
            # a queued cell is re-verified at pop time, no second entry needed
            if key_sums[cc] != uint64(0) and not poisoned[cc] and not in_queue[cc]:
                queue[tail] = cc
                in_queue[cc] = 1
                tail += 1
    return nrec, anomalies, aborted


@njit(cache=True, nogil=True)
def list_by_count(
    key_sums,
    value_sums,
    counts,
    seed,
    k,
    subtable_size,
    idx_bits,
    field_block,
    field_shift,
    cs_block,
    cs_shift,
    cs_mask,
    flavor,
    symbol_bits,
    out_keys,
):
    """Count-driven listing for insert-only tables, in place.

    A cell with count exactly 1 holds one pair; pop, record, remove at all
    k locations.  Returns (recovered, complete) where complete means every
    count reached zero.
    """
    m = key_sums.shape[0]
    idx_mask = (uint64(1) << uint64(idx_bits)) - uint64(1)
    size = uint64(subtable_size)
    sseed = uint64(seed)

    cap = out_keys.shape[0]
    queue = np.empty(m + k * cap + 8, np.int64)
    head = 0
    tail = 0
    for c in range(m):
        if counts[c] == 1:
            queue[tail] = c
            tail += 1

    nrec = 0
    while head < tail:
        c = queue[head]
        head += 1
        if counts[c] != 1:
            continue
        if nrec >= cap:
            break
        key = key_sums[c]
        out_keys[nrec] = key
        nrec += 1
        cs = _checksum_of(key, sseed, flavor, cs_block, cs_shift, cs_mask, uint64(symbol_bits))
        digest_block = -1
        digest = uint64(0)
        for j in range(k):
            blk = field_block[j]
            if blk != digest_block:
                digest = _prf64(key, sseed, blk)
                digest_block = blk
            chunk = (digest >> uint64(field_shift[j])) & idx_mask
            local = (chunk * size) >> uint64(idx_bits)
            cc = np.int64(local) + j * subtable_size
            key_sums[cc] ^= key
            value_sums[cc] ^= cs
            counts[cc] -= 1
            if counts[cc] == 1:
                queue[tail] = cc
                tail += 1

    complete = True
    for c in range(m):
        if counts[c] != 0:
            complete = False
            break
    return nrec, complete


@njit(cache=True, nogil=True)
def pack_keys(positions, values, symbol_bits, out):
    """packed = (position + 1) << symbol_bits | value, per element."""
    w = uint64(symbol_bits)
    for i in range(positions.shape[0]):
        out[i] = ((uint64(positions[i]) + uint64(1)) << w) | uint64(values[i])
