"""Design variances of the subsample estimator, conditional on (y, X)"""

import logging
import math
from itertools import combinations
from typing import Union

import numpy as np

from designs.individualized import osmac
from helper.errors import DimensionMismatch, EnumerationTooLarge
from helper.models import (
    IndividualizedDesign, InfluenceMatrix, Mechanism, StrataAssignment, StratifiedDesign,
    VarianceReport,
)
from helper.numerics import RngStream

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 1_000_000


def _rows(H: Union[InfluenceMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(H, InfluenceMatrix):
        return H.H
    H = np.asarray(H, dtype=float)
    return H[:, None] if H.ndim == 1 else H


def _centered_covariance(rows: np.ndarray, ddof: int = 0) -> np.ndarray:
    """Covariance with divisor (rows - ddof), floored at 1; exactly 0 for identical rows"""
    shifted = rows - rows[0]
    mean = shifted.mean(axis=0)
    centered = shifted - mean
    return centered.T @ centered / max(rows.shape[0] - ddof, 1)


def within_stratum_covariances(H: Union[InfluenceMatrix, np.ndarray],
                               strata: StrataAssignment) -> np.ndarray:
    """K x d x d stack of within-stratum covariances S_k, divisor N_k - 1 (0 for singletons)"""
    rows = _rows(H)
    if rows.shape[0] != strata.N:
        raise DimensionMismatch("Influence rows and strata cover different populations")
    return np.stack([_centered_covariance(rows[strata.members(k)], ddof=1) for k in range(strata.K)])


def poisson_variance(H: Union[InfluenceMatrix, np.ndarray], pi: np.ndarray) -> VarianceReport:
    """(1/N^2) sum_i (1/pi_i - 1) h_i h_i^T"""
    rows = _rows(H)
    pi = np.asarray(pi, dtype=float)
    N = rows.shape[0]
    matrix = (rows * (1.0 / pi - 1.0)[:, None]).T @ rows / N ** 2
    return VarianceReport(matrix=matrix, design_tag="poisson")


def with_replacement_variance(H: Union[InfluenceMatrix, np.ndarray], pi: np.ndarray,
                              n: int) -> VarianceReport:
    """Hansen-Hurwitz: (1/N^2)(1/n)[sum h h^T / p - (sum h)(sum h)^T], p = pi / sum(pi)"""
    rows = _rows(H)
    pi = np.asarray(pi, dtype=float)
    N = rows.shape[0]
    p = pi / pi.sum()
    total = rows.sum(axis=0)
    matrix = ((rows / p[:, None]).T @ rows - np.outer(total, total)) / (n * N ** 2)
    return VarianceReport(matrix=matrix, design_tag="with-replacement")


def stratified_variance_at(H: Union[InfluenceMatrix, np.ndarray], strata: StrataAssignment,
                           allocation: np.ndarray) -> VarianceReport:
    """Stratified SRS variance for a possibly fractional allocation"""
    V = within_stratum_covariances(H, strata)
    counts = strata.counts.astype(float)
    allocation = np.asarray(allocation, dtype=float)
    factors = counts ** 2 * (1.0 / allocation - 1.0 / counts)
    # a census stratum contributes nothing even when V_k carries rounding noise
    factors[allocation >= counts] = 0.0
    matrix = np.einsum("k,kij->ij", factors, V) / strata.N ** 2
    return VarianceReport(matrix=matrix, design_tag="stratified")


def stratified_variance(H: Union[InfluenceMatrix, np.ndarray],
                        design: StratifiedDesign) -> VarianceReport:
    """(1/N^2) sum_k N_k^2 ((1 - n_k/N_k)/n_k) S_k, exact for SRS within strata"""
    return stratified_variance_at(H, design.strata, design.allocation)


def _neyman_matrix(V: np.ndarray, counts: np.ndarray, n: int) -> np.ndarray:
    N = counts.sum()
    root_traces = np.sqrt(np.clip(np.einsum("kii->k", V), 0.0, None))
    spread = float(np.sum(counts * root_traces))
    matrix = np.zeros(V.shape[1:])
    for k in np.flatnonzero(root_traces > 0):
        matrix += counts[k] * V[k] * (spread / (n * root_traces[k]) - 1.0)
    return matrix / N ** 2


def neyman_variance(H: Union[InfluenceMatrix, np.ndarray], strata: StrataAssignment,
                    n: int) -> VarianceReport:
    """Stratified variance at the real-valued Neyman allocation; zero-trace strata are skipped"""
    V = within_stratum_covariances(H, strata)
    matrix = _neyman_matrix(V, strata.counts.astype(float), n)
    return VarianceReport(matrix=matrix, design_tag="neyman")


def neyman_targets(H: Union[InfluenceMatrix, np.ndarray], strata: StrataAssignment,
                   n: int) -> np.ndarray:
    """Real-valued n_k = n N_k sqrt(Tr V_k) / sum_k' N_k' sqrt(Tr V_k')"""
    V = within_stratum_covariances(H, strata)
    weights = strata.counts * np.sqrt(np.clip(np.einsum("kii->k", V), 0.0, None))
    return n * weights / weights.sum()


def _enumerate_stratified(rows: np.ndarray, design: StratifiedDesign,
                          limit: int) -> np.ndarray:
    strata = design.strata
    total = 1
    for k in range(strata.K):
        total *= math.comb(int(strata.counts[k]), int(design.allocation[k]))
    if total > limit:
        raise EnumerationTooLarge(f"{total} samples exceed the enumeration limit {limit}")

    N = strata.N
    totals = np.zeros((1, rows.shape[1]))
    for k in range(strata.K):
        members = strata.members(k)
        n_k = int(design.allocation[k])
        scale = strata.counts[k] / (n_k * N)
        # every n_k-subset of the stratum, as a 0/1 membership matrix
        subsets = np.array(list(_subset_masks(members.shape[0], n_k)))
        sums = subsets @ rows[members] * scale
        totals = (totals[:, None, :] + sums[None, :, :]).reshape(-1, rows.shape[1])
    return _centered_covariance(totals)


def _subset_masks(size: int, k: int):
    for chosen in combinations(range(size), k):
        mask = np.zeros(size)
        mask[list(chosen)] = 1.0
        yield mask


def _poisson_by_independence(rows: np.ndarray, pi: np.ndarray) -> np.ndarray:
    N = rows.shape[0]
    matrix = np.zeros((rows.shape[1], rows.shape[1]))
    for i in range(N):
        scaled = rows[i] / (N * pi[i])
        matrix += pi[i] * (1.0 - pi[i]) * np.outer(scaled, scaled)
    return matrix


def _multinomial(rows: np.ndarray, pi: np.ndarray) -> np.ndarray:
    N = rows.shape[0]
    n = pi.sum()
    p = pi / n
    Z = rows / (N * n * p)[:, None]
    counts_cov = n * (np.diag(p) - np.outer(p, p))
    return Z.T @ counts_cov @ Z


def brute_force_design_variance(H: Union[InfluenceMatrix, np.ndarray],
                                design: Union[StratifiedDesign, IndividualizedDesign],
                                limit: int = ENUMERATION_LIMIT) -> VarianceReport:
    """
    Exact variance of T = (1/N) sum_i R_i h_i / pi_i.

    Stratified designs are enumerated over every equiprobable sample;
    Poisson uses the independence sum and with-replacement the
    multinomial covariance of the draw counts.
    """
    rows = _rows(H)
    if isinstance(design, StratifiedDesign):
        matrix = _enumerate_stratified(rows, design, limit)
        tag = "stratified-enumerated"
    elif design.mechanism == Mechanism.POISSON:
        matrix = _poisson_by_independence(rows, design.pi)
        tag = "poisson-exact"
    else:
        matrix = _multinomial(rows, design.pi)
        tag = "with-replacement-exact"
    return VarianceReport(matrix=matrix, design_tag=tag)


def trace_gap_uninformative(H: Union[InfluenceMatrix, np.ndarray], n: int, K: int,
                            rng: RngStream) -> float:
    """
    Tr(Poisson variance at OSMAC) minus Tr(Neyman variance over K uninformative strata).

    Uninformative strata all carry the overall finite-population covariance
    V_h (divisor N). Neyman then allocates in proportion to N_k and the
    stratified term is (N/n - 1) Tr(V_h) / N for any split into K strata, so
    neither K nor the stream used to size the strata changes the value.
    """
    rows = _rows(H)
    N = rows.shape[0]
    if not 1 <= K <= N:
        raise ValueError(f"Need 1 <= K <= {N} strata, got {K}")
    if not 0 < n <= N:
        raise ValueError(f"Budget must lie in (0, {N}], got {n}")
    norms = np.linalg.norm(rows, axis=1)
    individualized = poisson_variance(rows, osmac(norms, n).pi)

    stratified = (N / n - 1.0) * float(np.trace(_centered_covariance(rows))) / N
    gap = individualized.trace - stratified
    logger.debug(f"Uninformative-strata trace gap {gap:.3e} (K={K})")
    return gap
