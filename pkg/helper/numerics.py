"""Dense SPD solves, empirical quantiles and the deterministic RNG contract"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import linalg

from helper.errors import DimensionMismatch, EmptyInput, NotPositiveDefinite

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
PIVOT_TOL = 1e-12
QUANTILE_SLACK = 1e-9


def spd_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """
    Solve A X = B for symmetric positive-definite A via Cholesky.

    Args:
        A: Square symmetric matrix
        B: Right-hand side, vector or matrix with A.shape[0] rows

    Returns:
        X with the same shape as B
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"Expected a square matrix, got shape {A.shape}")
    if B.ndim not in (1, 2) or B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"Cannot solve {A.shape} system against {B.shape}")

    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.T).max() > SYMMETRY_TOL * scale:
        raise DimensionMismatch("Matrix is not symmetric")

    largest_diagonal = np.diag(A).max()
    if not largest_diagonal > 0:
        raise NotPositiveDefinite("Matrix has no positive diagonal entry")
    try:
        factor = linalg.cholesky(A, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise NotPositiveDefinite(f"Cholesky factorization failed: {e}")

    pivots = np.diag(factor) ** 2
    if pivots.min() <= PIVOT_TOL * largest_diagonal:
        raise NotPositiveDefinite(
            f"Pivot {pivots.min():.3e} below tolerance relative to {largest_diagonal:.3e}"
        )
    return linalg.cho_solve((factor, True), B)


def empirical_quantile(values: Sequence[float], q: float) -> float:
    """Lower empirical quantile: the order statistic at index ceil(q*N), q=0 gives the minimum"""
    ordered = np.sort(np.asarray(values, dtype=float).ravel())
    if ordered.size == 0:
        raise EmptyInput("Cannot take a quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"Quantile level must lie in [0, 1], got {q}")
    # products like 0.3 * 10 land just above the integer in floating point
    rank = math.ceil(q * ordered.size - QUANTILE_SLACK)
    rank = min(max(rank, 1), ordered.size)
    return float(ordered[rank - 1])


@dataclass(frozen=True)
class RngStream:
    """
    Deterministic random stream keyed by (base_seed, stream_id).

    Every call to generator() restarts the same sequence; substreams give
    independent children so one consumer never shifts another's draws.
    """
    base_seed: int
    stream_id: int = 0
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.base_seed < 2 ** 64:
            raise ValueError("base_seed must be an unsigned 64-bit integer")
        if not 0 <= self.stream_id < 2 ** 64:
            raise ValueError("stream_id must be an unsigned 64-bit integer")

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.base_seed, spawn_key=(self.stream_id,) + self.path
        )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def substream(self, *keys: int) -> "RngStream":
        """Child stream for the given integer keys"""
        return RngStream(self.base_seed, self.stream_id, self.path + tuple(int(k) for k in keys))
