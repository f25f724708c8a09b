"""Individualized designs: OSMAC and the surrogate-assisted OSSAT intensities"""

import logging

import numpy as np

from helper.errors import AllZeroNorms, DimensionMismatch, InfeasibleBudget, NegativeRadicand
from helper.models import Dataset, IndividualizedDesign, Mechanism
from helper.numerics import spd_solve

logger = logging.getLogger(__name__)

FLOOR_FRACTION = 0.01
RADICAND_SLACK = 1e-12


def clamp_intensities(raw: np.ndarray, n: float) -> np.ndarray:
    """
    Scale raw positive scores to sum n, then cap at 1 and hand the excess
    back to the uncapped units until no intensity exceeds 1.
    """
    raw = np.asarray(raw, dtype=float)
    pi = raw * n / raw.sum()
    capped = np.zeros(raw.shape[0], dtype=bool)
    for _ in range(raw.shape[0]):
        over = ~capped & (pi > 1.0)
        if not over.any():
            break
        capped |= over
        pi[capped] = 1.0
        free = ~capped
        if not free.any():
            break
        pi[free] = raw[free] * (n - capped.sum()) / raw[free].sum()
    return pi


def _intensities(scores: np.ndarray, n: int) -> np.ndarray:
    """Budget-n intensities proportional to scores, with a floor for zero scores"""
    N = scores.shape[0]
    if n > N:
        raise InfeasibleBudget(f"Budget {n} exceeds population size {N}")
    if n <= 0:
        raise InfeasibleBudget("Budget must be positive")
    positive = scores > 0
    if not positive.any():
        raise AllZeroNorms("Every unit has zero sampling score")

    pi = np.empty(N)
    floor = n * FLOOR_FRACTION / N
    zero_count = N - int(positive.sum())
    if zero_count:
        logger.debug(f"{zero_count} units with zero score get the floor {floor:.3g}")
    pi[~positive] = floor
    pi[positive] = clamp_intensities(scores[positive], n - floor * zero_count)
    return pi


def osmac(influence_norms: np.ndarray, n: int,
          mechanism: Mechanism = Mechanism.POISSON) -> IndividualizedDesign:
    """Intensities proportional to the influence-function norms, summing to n"""
    norms = np.asarray(influence_norms, dtype=float)
    if np.any(norms < 0) or not np.all(np.isfinite(norms)):
        raise DimensionMismatch("Influence norms must be finite and non-negative")
    return IndividualizedDesign(pi=_intensities(norms, n), mechanism=mechanism)


def ossat_scores(p_hat: np.ndarray, p_s_hat: np.ndarray, X: np.ndarray,
                 m_x: np.ndarray) -> np.ndarray:
    """sqrt(p_s - 2 p_s p + p^2) * ||M_x^{-1} x_i|| per unit"""
    p = np.asarray(p_hat, dtype=float)
    p_s = np.asarray(p_s_hat, dtype=float)
    if p.shape != (X.shape[0],) or p_s.shape != p.shape:
        raise DimensionMismatch("Probability vectors must match the covariate rows")

    radicand = p_s - 2.0 * p_s * p + p ** 2
    worst = radicand.min()
    if worst < -RADICAND_SLACK:
        raise NegativeRadicand(f"Inconsistent probability estimates, radicand {worst:.3e}")
    if np.any((p < 0) | (p > 1)) or np.any((p_s < 0) | (p_s > 1)):
        raise DimensionMismatch("Probabilities must lie in [0, 1]")
    radicand = np.clip(radicand, 0.0, None)
    leverage = np.linalg.norm(spd_solve(m_x, X.T).T, axis=1)
    return np.sqrt(radicand) * leverage


def ossat(p_hat: np.ndarray, p_s_hat: np.ndarray, data: Dataset, m_x: np.ndarray, n2: int,
          mechanism: Mechanism = Mechanism.WITH_REPLACEMENT) -> IndividualizedDesign:
    """Second-step surrogate-assisted intensities for a budget of n2 draws"""
    if n2 < 1:
        raise InfeasibleBudget("Second-step budget must be at least 1")
    scores = ossat_scores(p_hat, p_s_hat, data.X, m_x)
    return IndividualizedDesign(pi=_intensities(scores, n2), mechanism=mechanism)
