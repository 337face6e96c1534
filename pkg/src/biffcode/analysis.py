"""Numeric models: peeling thresholds, failure rates, sizing, comparisons.

Everything here is a pure function of its arguments.  The threshold
solver reproduces the classical 2-core constants; the rest are the
small closed forms that turn those constants into table sizes and
expected failure counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, stats

from .codec import CodecParams, patch_size_bytes
from .errors import BelowThresholdError, ParameterError

_GRID_POINTS = 100_000


@dataclass(frozen=True)
class ThresholdResult:
    """Solved peeling threshold for one k."""

    k: int
    c_k: float
    tolerance: float


def _min_margin(alpha: float, k: int, grid: np.ndarray) -> float:
    """Minimum of g(x) = x - 1 + exp(-k*alpha*x^(k-1)) over x in (0, 1).

    Peeling at load 1/alpha succeeds asymptotically iff g stays strictly
    positive on (0, 1).  Evaluates g on a dense grid, then polishes every
    interior local minimum with a bounded scalar minimizer.
    """

    def g(x):
        return x - 1.0 + np.exp(-k * alpha * np.power(x, k - 1))

    vals = g(grid)
    lows = np.nonzero((vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:]))[0] + 1
    best = float(vals.min())
    for i in lows:
        res = optimize.minimize_scalar(
            g, bounds=(grid[i - 1], grid[i + 1]), method="bounded", options={"xatol": 1e-12}
        )
        best = min(best, float(res.fun))
    return best


@lru_cache(maxsize=None)
def solve_threshold(k: int, tolerance: float = 5e-5) -> ThresholdResult:
    """Compute c_k, the load threshold for complete peeling.

    c_k^{-1} is the supremum of alpha in (0, 1) such that
    1 - exp(-k*alpha*x^(k-1)) < x holds for every x in (0, 1).  The
    indicator is monotone in alpha, so bisection on alpha converges; the
    universally quantified inequality is checked by _min_margin.
    """
    if k < 3:
        raise ParameterError(f"threshold defined for k >= 3, got {k}")
    grid = np.arange(1, _GRID_POINTS) / _GRID_POINTS
    lo, hi = 0.0, 1.0
    # alpha error under tol/3 keeps the c_k = 1/alpha error under tol
    # for every c_k in Table range (c_k < 2 implies |dc| < 4|da|)
    while hi - lo > tolerance / 4:
        mid = (lo + hi) / 2
        if _min_margin(mid, k, grid) > 0.0:
            lo = mid
        else:
            hi = mid
    alpha = (lo + hi) / 2
    return ThresholdResult(k=k, c_k=1.0 / alpha, tolerance=tolerance)


def threshold(k: int) -> float:
    """The 2-core threshold c_k: peeling n pairs needs m > c_k * n."""
    return solve_threshold(k).c_k


def expected_unrecoverable(error_count: float, z: float, k: int) -> float:
    """Expected number of unrecoverable symbols: E * z^k.

    A symbol survives decoding unless all k of its cells are corrupted;
    with E errors and a fraction z of cells corrupted the expected count
    of such total losses is E * z^k, and the count is approximately
    Poisson when it is small.
    """
    if not 0.0 <= z <= 1.0:
        raise ParameterError(f"z must be in [0, 1], got {z}")
    if error_count < 0:
        raise ParameterError("error_count must be nonnegative")
    if k < 1:
        raise ParameterError("k must be at least 1")
    return error_count * z**k


def poisson_interval(mean: float, coverage: float = 0.99) -> tuple[int, int]:
    """Two-sided equal-tail Poisson acceptance interval for a count."""
    if mean < 0:
        raise ParameterError("mean must be nonnegative")
    if not 0 < coverage < 1:
        raise ParameterError("coverage must be in (0, 1)")
    lo, hi = stats.poisson.interval(coverage, mean)
    return int(lo), int(hi)


def size_table_for_pairs(pair_count: int, k: int, slack: float) -> int:
    """Cells needed to list pair_count pairs at the given slack over c_k.

    m = ceil(slack * pairs / k) * k, rounded up so the k subtables stay
    equal.  slack below the threshold c_k is rejected: peeling would fail
    almost surely at scale.
    """
    if pair_count < 0:
        raise ParameterError("pair_count must be nonnegative")
    c_k = threshold(k)
    if slack < c_k:
        raise BelowThresholdError(
            f"slack {slack} is below the k={k} threshold {c_k:.4f}"
        )
    if pair_count == 0:
        return 0
    return math.ceil(slack * pair_count / k) * k


def size_table(error_bound: int, k: int, slack: float) -> int:
    """Cells needed to correct error_bound symbol errors (2 pairs each)."""
    return size_table_for_pairs(2 * error_bound, k, slack)


@dataclass(frozen=True)
class BlockSchemeResult:
    """Optimal blocked-checksum layout for the same channel."""

    block_len: float
    overhead_bits: float


def block_scheme_overhead(
    message_len: int, error_bound: int, checksum_bits: float, expansion: float
) -> BlockSchemeResult:
    """Best-case cost of the block-checksum alternative.

    Splitting L symbols into blocks of B costs L*c/B bits of checksums
    plus correction data for the up-to-E damaged blocks, k*E*B bits.
    The calculus minimum of f(B) = L*c/B + k*E*B sits at
    B = sqrt(L*c/(k*E)) with value 2*sqrt(L*c*k*E): the block scheme
    scales as sqrt(L*E) where a table of cells scales linearly in E.
    """
    if min(message_len, error_bound) <= 0 or min(checksum_bits, expansion) <= 0:
        raise ParameterError("all block-scheme inputs must be positive")
    b_opt = math.sqrt(message_len * checksum_bits / (expansion * error_bound))
    overhead = 2.0 * math.sqrt(message_len * checksum_bits * expansion * error_bound)
    return BlockSchemeResult(block_len=b_opt, overhead_bits=overhead)


@dataclass(frozen=True)
class OverheadBreakdown:
    """Patch cost relative to the optimal E * symbol_width bits.

    naive_factor charges every serialized bit against the optimum;
    inherent_factor excludes the position bits inside each key field,
    since any scheme that names error locations must spend them.
    """

    patch_bits: int
    optimal_bits: int
    naive_factor: float
    inherent_factor: float


def biff_overhead_factor(params: CodecParams, error_bound: int) -> OverheadBreakdown:
    """Exact serialized-patch overhead relative to E * symbol_width bits."""
    if error_bound <= 0:
        raise ParameterError("error_bound must be positive")
    patch_bits = patch_size_bytes(params) * 8
    optimal_bits = error_bound * params.symbol_width
    inherent = patch_bits - params.m * params.position_width
    return OverheadBreakdown(
        patch_bits=patch_bits,
        optimal_bits=optimal_bits,
        naive_factor=patch_bits / optimal_bits,
        inherent_factor=inherent / optimal_bits,
    )


def relative_transfer_size(error_rate: float, overhead_factor: float = 6.0) -> float:
    """Total transfer relative to the bare message.

    A message plus its patch ships 1 + overhead_factor * error_rate
    times the message size; the nominal factor of 6 (about 3 cells per
    error, 2 symbol-sized words per cell) gives 1.06 at a 1% error rate.
    """
    if error_rate < 0 or overhead_factor < 0:
        raise ParameterError("rates and factors must be nonnegative")
    return 1.0 + error_rate * overhead_factor
