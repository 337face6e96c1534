"""Encode, decode, and the bit-exact patch wire format.

A patch is the table produced by encoding a message's (value, position)
pairs.  Decoding deletes the received message's pairs from a working
copy of the patch and peels; whatever survives is the symmetric
difference between sent and received, which yields the corrections.

Wire format (little-endian throughout):

    offset  size  field
    0       4     magic "BIFP"
    4       2     format version (currently 1)
    6       1     symbol width w in bits
    7       1     position width p in bits
    8       1     checksum width b in bits
    9       1     checksum flavor (0 = keyed hash, 1 = polynomial)
    10      2     k (number of subtables)
    12      2     flags (bit 0: cells carry signed counts)
    14      8     seed
    22      8     m (total cells)
    30      8     n_symbols (message length the patch was built for; 0 if none)
    38      8     payload byte length (for file payloads; 2^64 - 1 if absent)
    46      4     CRC-32 of bytes 0..45
    50      ...   m cell records, subtable-major

Each cell record is ceil((p + w + 1) / 8) key bytes, then ceil(b / 8)
checksum bytes, then (only when flags bit 0 is set) a signed 4-byte
count.  Any header byte flip is caught by the CRC; a short body is a
distinct truncation error.  Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    CorruptHeaderError,
    ParameterError,
    ParamsMismatchError,
    TruncatedPatchError,
    UnsupportedVersionError,
)
from .hashing import ChecksumFlavor, HashConfig
from .iblt import IbltTable, PairKey

MAGIC = b"BIFP"
FORMAT_VERSION = 1
NO_PAYLOAD = (1 << 64) - 1
_FLAG_COUNTING = 1

_HEADER = struct.Struct("<4sHBBBBHHQQQQ")
_CRC = struct.Struct("<I")
HEADER_SIZE = _HEADER.size + _CRC.size


@dataclass(frozen=True)
class CodecParams:
    """Everything both ends must agree on for a patch to decode.

    symbol_width is the per-symbol bit width w; position_width p bounds
    the message length (a message of n symbols needs 2^p > n).  The
    packed pair (position + 1, value) must fit a 64-bit word, so
    p + w + 1 <= 64.
    """

    symbol_width: int
    position_width: int
    k: int
    m: int
    checksum_bits: int = 32
    seed: int = 0
    flavor: ChecksumFlavor = ChecksumFlavor.HASH

    def __post_init__(self):
        if not 1 <= self.symbol_width <= 62:
            raise ParameterError(f"symbol_width must be in [1, 62], got {self.symbol_width}")
        if not 1 <= self.position_width <= 62:
            raise ParameterError(f"position_width must be in [1, 62], got {self.position_width}")
        if self.position_width + self.symbol_width + 1 > 64:
            raise ParameterError(
                f"position_width + symbol_width + 1 must fit 64 bits, got {self.position_width + self.symbol_width + 1}"
            )
        if self.k < 2:
            raise ParameterError(f"k must be at least 2, got {self.k}")
        if self.m < 0 or self.m % self.k:
            # m == 0 is the degenerate header-only patch for empty payloads
            raise ParameterError(f"m must be a nonnegative multiple of k, got m={self.m} k={self.k}")
        if not 8 <= self.checksum_bits <= 64:
            raise ParameterError(f"checksum_bits must be in [8, 64], got {self.checksum_bits}")
        if not 0 <= self.seed < 1 << 64:
            raise ParameterError("seed must fit in 64 bits")
        try:
            object.__setattr__(self, "flavor", ChecksumFlavor(self.flavor))
        except ValueError as exc:
            raise ParameterError(f"unknown checksum flavor {self.flavor!r}") from exc

    @property
    def hash_config(self) -> HashConfig:
        return HashConfig(self.seed, self.k, self.m // self.k, self.checksum_bits)

    @property
    def max_positions(self) -> int:
        return 1 << self.position_width

    def new_table(self, counting: bool = False) -> IbltTable:
        return IbltTable(self.hash_config, self.symbol_width, self.flavor, counting)


@dataclass(frozen=True)
class DecodeReport:
    """What a decode did and whether it finished.

    corrections holds (position, old value, new value) triples, one per
    position, applied to the output only after peeling terminated; for
    erasure decoding old value is None.  success means the working table
    peeled down to nothing (every difference was recovered).  anomalies
    counts invalid pure-cell decodes plus recovered pairs that targeted
    an impossible position (duplicate or, for erasures, not erased).
    """

    corrections: tuple[tuple[int, int | None, int], ...]
    residual_cells: int
    anomalies: int
    success: bool
    delete_seconds: float = field(default=0.0, compare=False)
    peel_seconds: float = field(default=0.0, compare=False)


def _check_message(message: np.ndarray, params: CodecParams) -> np.ndarray:
    message = np.ascontiguousarray(message, np.uint64)
    if message.ndim != 1:
        raise ParameterError("message must be one-dimensional")
    if message.size >= params.max_positions:
        raise ParameterError(
            f"message of {message.size} symbols needs position_width > {params.position_width}"
        )
    if message.size and int(message.max()) >> params.symbol_width:
        raise ParameterError(f"symbols do not fit in {params.symbol_width} bits")
    return message


def _check_patch(patch: IbltTable, params: CodecParams):
    if (
        patch.cfg != params.hash_config
        or patch.flavor != params.flavor
        or patch.symbol_bits != params.symbol_width
    ):
        raise ParamsMismatchError("patch was built with different parameters")


def encode(message, params: CodecParams, counting: bool = False) -> IbltTable:
    """Build the patch table for a message: insert (x_i, i) for every i.

    One sequential pass over the message, O(n * k); the message itself is
    never permuted or copied beyond the input conversion.
    """
    message = _check_message(message, params)
    table = params.new_table(counting)
    table.insert_pairs(np.arange(message.size, dtype=np.uint64), message)
    return table


def encode_set(pairs, params: CodecParams, counting: bool = False) -> IbltTable:
    """Build a patch holding a set of PairKeys (for reconciliation)."""
    pairs = list(pairs)
    table = params.new_table(counting)
    if pairs:
        positions = np.fromiter((p.position for p in pairs), np.uint64, len(pairs))
        values = np.fromiter((p.value for p in pairs), np.uint64, len(pairs))
        if positions.size and int(positions.max()) >= params.max_positions:
            raise ParameterError(f"positions do not fit in {params.position_width} bits")
        table.insert_pairs(positions, values)
    return table


def decode(received, patch: IbltTable, params: CodecParams) -> tuple[np.ndarray, DecodeReport]:
    """Correct a received message against a clean or corrupted patch.

    Deletes (y_i, i) for all i from a working copy of the patch, peels,
    and buffers a correction for every recovered pair (z, i) with
    z != y_i.  Corrections are applied to the output copy only after
    peeling terminates.  success is residual == 0; on failure the output
    still carries whatever corrections were recovered.
    """
    received = _check_message(received, params)
    _check_patch(patch, params)
    n = received.size

    t0 = time.perf_counter()
    work = patch.copy()
    work.delete_pairs(np.arange(n, dtype=np.uint64), received)
    t1 = time.perf_counter()
    keys, _, anomalies, aborted = work.peel_raw(position_bound=n)
    t2 = time.perf_counter()

    positions = (keys >> np.uint64(params.symbol_width)) - np.uint64(1)
    values = keys & np.uint64((1 << params.symbol_width) - 1)
    changed = values != received[positions]
    positions, values = positions[changed], values[changed]
    # a position reported twice means a checksum collision won somewhere;
    # keep the first-recovered value and flag the rest
    uniq, first, _ = np.unique(positions, return_index=True, return_counts=True)
    if uniq.size != positions.size:
        anomalies += positions.size - uniq.size
        keep = np.sort(first)
        positions, values = positions[keep], values[keep]
    order = np.argsort(positions)
    positions, values = positions[order], values[order]
    old = received[positions]

    corrected = received.copy()
    corrected[positions] = values
    corrections = tuple(zip(positions.tolist(), old.tolist(), values.tolist()))
    residual = work.nonzero_cells()
    report = DecodeReport(
        corrections=corrections,
        residual_cells=residual,
        anomalies=anomalies,
        success=residual == 0 and not aborted,
        delete_seconds=t1 - t0,
        peel_seconds=t2 - t1,
    )
    return corrected, report


def decode_erasures(
    received, erased, patch: IbltTable, params: CodecParams
) -> tuple[np.ndarray, DecodeReport]:
    """Fill erased positions from the patch.

    Only non-erased positions are deleted from the working copy (the
    erased ones contributed nothing on this side), so the table is left
    holding exactly the erased pairs.  A recovered pair aimed at a
    non-erased position is an anomaly, not a correction.  success needs
    residual == 0 and every erased position filled.
    """
    received = _check_message(received, params)
    _check_patch(patch, params)
    n = received.size
    erased = np.unique(np.fromiter(erased, np.int64))
    if erased.size and (erased[0] < 0 or erased[-1] >= n):
        raise ParameterError("erased positions out of range")

    t0 = time.perf_counter()
    keep = np.ones(n, bool)
    keep[erased] = False
    positions = np.nonzero(keep)[0].astype(np.uint64)
    work = patch.copy()
    work.delete_pairs(positions, received[keep])
    t1 = time.perf_counter()
    keys, _, anomalies, aborted = work.peel_raw(position_bound=n)
    t2 = time.perf_counter()

    rec_pos = (keys >> np.uint64(params.symbol_width)) - np.uint64(1)
    rec_val = keys & np.uint64((1 << params.symbol_width) - 1)
    on_target = ~keep[rec_pos]
    anomalies += int(np.count_nonzero(~on_target))
    rec_pos, rec_val = rec_pos[on_target], rec_val[on_target]
    uniq, first, _ = np.unique(rec_pos, return_index=True, return_counts=True)
    if uniq.size != rec_pos.size:
        anomalies += rec_pos.size - uniq.size
        sel = np.sort(first)
        rec_pos, rec_val = rec_pos[sel], rec_val[sel]
    order = np.argsort(rec_pos)
    rec_pos, rec_val = rec_pos[order], rec_val[order]

    corrected = received.copy()
    corrected[rec_pos] = rec_val
    corrections = tuple((int(p), None, int(v)) for p, v in zip(rec_pos, rec_val))
    residual = work.nonzero_cells()
    report = DecodeReport(
        corrections=corrections,
        residual_cells=residual,
        anomalies=anomalies,
        success=residual == 0 and not aborted and rec_pos.size == erased.size,
        delete_seconds=t1 - t0,
        peel_seconds=t2 - t1,
    )
    return corrected, report


def reconcile_sets(
    local_pairs, remote_patch: IbltTable, params: CodecParams
) -> tuple[set[PairKey], set[PairKey], bool]:
    """Recover the symmetric difference between a local set and a remote patch.

    Deletes the local pairs from a working copy and peels.  Recovered
    pairs are classified by membership probe against the local set; when
    the patch was built in counting mode the count's sign decides instead
    (+1 remote-only, -1 local-only), which also distinguishes pairs whose
    keys match but values differ on the remote side.
    """
    local = set(local_pairs)
    _check_patch(remote_patch, params)
    work = remote_patch.copy()
    if local:
        ordered = list(local)
        positions = np.fromiter((p.position for p in ordered), np.uint64, len(ordered))
        values = np.fromiter((p.value for p in ordered), np.uint64, len(ordered))
        if int(positions.max()) >= params.max_positions:
            raise ParameterError(f"positions do not fit in {params.position_width} bits")
        work.delete_pairs(positions, values)
    result = work.peel(position_bound=params.max_positions)

    local_only: set[PairKey] = set()
    remote_only: set[PairKey] = set()
    for pair, sign in zip(result.recovered, result.signs):
        if work.counting and sign != 0:
            (remote_only if sign > 0 else local_only).add(pair)
        elif pair in local:
            local_only.add(pair)
        else:
            remote_only.add(pair)
    return local_only, remote_only, result.complete


def key_record_bytes(params: CodecParams) -> int:
    return (params.position_width + params.symbol_width + 1 + 7) // 8


def checksum_record_bytes(params: CodecParams) -> int:
    return (params.checksum_bits + 7) // 8


def patch_size_bytes(params: CodecParams, counting: bool = False) -> int:
    """Exact serialized size for a patch with these parameters."""
    record = key_record_bytes(params) + checksum_record_bytes(params) + (4 if counting else 0)
    return HEADER_SIZE + params.m * record


def _slab(words: np.ndarray, nbytes: int) -> np.ndarray:
    return words.astype("<u8", copy=False).view(np.uint8).reshape(-1, 8)[:, :nbytes]


def serialize_patch(
    patch: IbltTable,
    params: CodecParams,
    n_symbols: int = 0,
    payload_byte_len: int | None = None,
) -> bytes:
    """Render a patch to the wire format described in the module docstring."""
    _check_patch(patch, params)
    flags = _FLAG_COUNTING if patch.counting else 0
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        params.symbol_width,
        params.position_width,
        params.checksum_bits,
        int(params.flavor),
        params.k,
        flags,
        params.seed,
        params.m,
        n_symbols,
        NO_PAYLOAD if payload_byte_len is None else payload_byte_len,
    )
    parts = [header, _CRC.pack(zlib.crc32(header))]
    slabs = [_slab(patch.key_sums, key_record_bytes(params)), _slab(patch.value_sums, checksum_record_bytes(params))]
    if patch.counting:
        slabs.append(patch.counts.astype("<i4").view(np.uint8).reshape(-1, 4))
    parts.append(np.concatenate(slabs, axis=1).tobytes())
    return b"".join(parts)


@dataclass(frozen=True)
class PatchHeader:
    params: CodecParams
    counting: bool
    n_symbols: int
    payload_byte_len: int | None


def read_patch_header(data: bytes) -> PatchHeader:
    """Parse and validate the fixed-size header without touching cells."""
    if len(data) < 4:
        raise TruncatedPatchError(f"patch is {len(data)} bytes, shorter than the magic")
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    if len(data) < 6:
        raise TruncatedPatchError("patch truncated inside the version field")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"format version {version}, expected {FORMAT_VERSION}")
    if len(data) < HEADER_SIZE:
        raise TruncatedPatchError(f"patch is {len(data)} bytes, header needs {HEADER_SIZE}")
    (crc,) = _CRC.unpack_from(data, _HEADER.size)
    if crc != zlib.crc32(data[: _HEADER.size]):
        raise CorruptHeaderError("header CRC mismatch")
    _, _, w, p, b, flavor, k, flags, seed, m, n_symbols, payload_len = _HEADER.unpack_from(data, 0)
    try:
        params = CodecParams(w, p, k, m, b, seed, ChecksumFlavor(flavor))
    except (ParameterError, ValueError) as exc:
        raise CorruptHeaderError(f"header passed CRC but is inconsistent: {exc}") from exc
    return PatchHeader(
        params=params,
        counting=bool(flags & _FLAG_COUNTING),
        n_symbols=n_symbols,
        payload_byte_len=None if payload_len == NO_PAYLOAD else payload_len,
    )


def deserialize_patch(data: bytes) -> tuple[IbltTable, CodecParams]:
    """Rebuild (patch, params) from bytes; inverse of serialize_patch."""
    head = read_patch_header(data)
    params = head.params
    kb = key_record_bytes(params)
    cb = checksum_record_bytes(params)
    record = kb + cb + (4 if head.counting else 0)
    body = data[HEADER_SIZE:]
    if len(body) != params.m * record:
        raise TruncatedPatchError(
            f"cell payload is {len(body)} bytes, expected {params.m * record}"
        )
    rows = np.frombuffer(body, np.uint8).reshape(params.m, record)
    table = params.new_table(head.counting)

    def unpack_words(cols: np.ndarray) -> np.ndarray:
        padded = np.zeros((params.m, 8), np.uint8)
        padded[:, : cols.shape[1]] = cols
        return padded.view("<u8").ravel()

    table.key_sums[:] = unpack_words(rows[:, :kb])
    table.value_sums[:] = unpack_words(rows[:, kb : kb + cb])
    if head.counting:
        table.counts[:] = rows[:, kb + cb :].copy().view("<i4").ravel().astype(np.int64)
    return table, params
