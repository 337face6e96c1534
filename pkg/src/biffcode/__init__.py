"""Patch-based error correction for large symbol sequences.

A fixed-size table of XOR cells summarizes a message; after the message
is damaged, deleting the received symbols from the table leaves exactly
the difference between sent and received, which peels out pair by pair.
The same machinery handles erasure filling and set reconciliation.
"""

from .analysis import (
    BlockSchemeResult,
    OverheadBreakdown,
    ThresholdResult,
    biff_overhead_factor,
    block_scheme_overhead,
    expected_unrecoverable,
    poisson_interval,
    relative_transfer_size,
    size_table,
    size_table_for_pairs,
    solve_threshold,
    threshold,
)
from .channel import (
    ChannelModel,
    ChannelSpec,
    apply_channel,
    corrupt_burst,
    corrupt_table,
    corrupt_uniform,
)
from .codec import (
    CodecParams,
    DecodeReport,
    PatchHeader,
    decode,
    decode_erasures,
    deserialize_patch,
    encode,
    encode_set,
    patch_size_bytes,
    read_patch_header,
    reconcile_sets,
    serialize_patch,
)
from .errors import (
    BadMagicError,
    BelowThresholdError,
    BiffError,
    CorruptHeaderError,
    ParameterError,
    ParamsMismatchError,
    PatchFormatError,
    TruncatedPatchError,
    UnsupportedVersionError,
)
from .experiment import (
    ExperimentConfig,
    ExperimentKind,
    ExperimentReport,
    TimingMode,
    TrialRow,
    run_experiment,
    summarize,
    two_proportion_z,
)
from .hashing import ChecksumFlavor, HashConfig, checksum_value, prf64
from .iblt import IbltTable, PairKey, PeelResult

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "BelowThresholdError",
    "BiffError",
    "BlockSchemeResult",
    "ChannelModel",
    "ChannelSpec",
    "ChecksumFlavor",
    "CodecParams",
    "CorruptHeaderError",
    "DecodeReport",
    "ExperimentConfig",
    "ExperimentKind",
    "ExperimentReport",
    "HashConfig",
    "IbltTable",
    "OverheadBreakdown",
    "PairKey",
    "ParameterError",
    "ParamsMismatchError",
    "PatchFormatError",
    "PatchHeader",
    "PeelResult",
    "ThresholdResult",
    "TimingMode",
    "TrialRow",
    "TruncatedPatchError",
    "UnsupportedVersionError",
    "apply_channel",
    "biff_overhead_factor",
    "block_scheme_overhead",
    "checksum_value",
    "corrupt_burst",
    "corrupt_table",
    "corrupt_uniform",
    "decode",
    "decode_erasures",
    "deserialize_patch",
    "encode",
    "encode_set",
    "expected_unrecoverable",
    "patch_size_bytes",
    "poisson_interval",
    "prf64",
    "read_patch_header",
    "reconcile_sets",
    "relative_transfer_size",
    "run_experiment",
    "serialize_patch",
    "size_table",
    "size_table_for_pairs",
    "solve_threshold",
    "summarize",
    "threshold",
    "two_proportion_z",
    "__version__",
]
