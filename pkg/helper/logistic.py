"""Weighted logistic regression, the M_x matrix and per-unit influence functions"""

import logging
from typing import Optional

import numpy as np
from scipy import special

from helper.errors import (
    DegenerateDesign, DimensionMismatch, NotPositiveDefinite, SeparationOrNonConvergence
)
from helper.models import Dataset, FittedModel, InfluenceMatrix
from helper.numerics import spd_solve

logger = logging.getLogger(__name__)

MAX_ITER = 50
MAX_HALVINGS = 30
SCORE_TOL = 1e-10
# relative log-likelihood change treated as rounding noise
LOGLIK_SLACK = 1e-12


def expit(z):
    """Logistic function 1/(1+exp(-z)), overflow-free for large |z|"""
    return special.expit(z)


def log_likelihood(X: np.ndarray, outcome: np.ndarray, weights: np.ndarray,
                   beta: np.ndarray) -> float:
    eta = X @ beta
    return float(np.sum(weights * (outcome * eta - np.logaddexp(0.0, eta))))


def weighted_score(X: np.ndarray, outcome: np.ndarray, weights: np.ndarray,
                   beta: np.ndarray) -> np.ndarray:
    """(1/N) sum_i w_i (y_i - p_i) x_i"""
    residual = outcome - expit(X @ beta)
    return X.T @ (weights * residual) / X.shape[0]


def information(X: np.ndarray, weights: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """M_x(beta) = (1/N) sum_i w_i p_i (1 - p_i) x_i x_i^T"""
    p = expit(X @ beta)
    m_x = (X * (weights * p * (1.0 - p))[:, None]).T @ X / X.shape[0]
    return 0.5 * (m_x + m_x.T)


def fit_weighted_mle(data: Dataset, outcome: np.ndarray, weights: Optional[np.ndarray] = None,
                     max_iter: int = MAX_ITER, tol: float = SCORE_TOL,
                     strict: bool = False) -> FittedModel:
    """
    Fit a logistic regression by IRLS with step-halving on the weighted log-likelihood.

    Args:
        data: Dataset whose covariates are used (its outcomes are ignored)
        outcome: 0/1 vector aligned with data.X
        weights: Non-negative estimation weights, ones when omitted
        max_iter: Newton iteration cap
        tol: Convergence threshold on the max-norm of the weighted score
        strict: Raise SeparationOrNonConvergence instead of returning an
            unconverged fit

    Returns:
        FittedModel; converged is False when the cap is hit or the
        information matrix loses definiteness along the path
    """
    X = data.X
    N, d = X.shape
    y = np.asarray(outcome, dtype=float)
    w = np.ones(N) if weights is None else np.asarray(weights, dtype=float)
    if y.shape != (N,) or w.shape != (N,):
        raise DimensionMismatch(f"outcome and weights must have length {N}")
    if N < d + 1:
        raise DegenerateDesign(f"{N} units cannot identify {d} coefficients")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DimensionMismatch("weights must be finite and non-negative")

    positive = w > 0
    if not (np.any(y[positive] == 1) and np.any(y[positive] == 0)):
        raise DegenerateDesign("Need at least one case and one control with positive weight")

    # Newton steps and halving are run on mean-one weights so a common
    # rescaling of the weights reproduces the same iterates
    weight_scale = w.mean()
    w_unit = w / weight_scale

    beta = np.zeros(d)
    current = log_likelihood(X, y, w_unit, beta)
    iterations = 0
    converged = False

    while True:
        score = weighted_score(X, y, w_unit, beta)
        if np.abs(score).max() * weight_scale <= tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        try:
            step = spd_solve(information(X, w_unit, beta), score)
        except NotPositiveDefinite as e:
            if iterations == 0:
                raise DegenerateDesign(f"Weighted X'WX is not positive definite: {e}")
            logger.warning(f"Information matrix lost definiteness at iteration {iterations}")
            break

        scale = 1.0
        candidate = beta + step
        trial = log_likelihood(X, y, w_unit, candidate)
        halvings = 0
        floor = current - LOGLIK_SLACK * max(1.0, abs(current))
        while trial < floor and halvings < MAX_HALVINGS:
            scale *= 0.5
            candidate = beta + scale * step
            trial = log_likelihood(X, y, w_unit, candidate)
            halvings += 1
        if trial < floor:
            logger.warning(f"Step-halving found no ascent at iteration {iterations}")
            break
        beta, current = candidate, trial
        iterations += 1
        logger.debug(f"IRLS iteration {iterations}: loglik={current:.12g}, halvings={halvings}")

    if converged:
        beta = _polish(X, y, w_unit, beta)
    else:
        if strict:
            raise SeparationOrNonConvergence(
                f"Logistic fit did not converge after {iterations} iterations"
                " (separated or nearly separated outcomes)")
        logger.warning(f"Logistic fit did not converge after {iterations} iterations")

    final_score = np.abs(weighted_score(X, y, w, beta)).max()
    return FittedModel(
        beta=beta,
        m_x=information(X, w, beta),
        converged=converged,
        iterations=iterations,
        final_score_norm=float(final_score),
        log_likelihood=log_likelihood(X, y, w, beta),
    )


def _polish(X: np.ndarray, y: np.ndarray, w: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """One extra Newton step so fits stopping one iteration apart agree to rounding"""
    score = weighted_score(X, y, w, beta)
    try:
        candidate = beta + spd_solve(information(X, w, beta), score)
    except NotPositiveDefinite:
        return beta
    if np.abs(weighted_score(X, y, w, candidate)).max() <= np.abs(score).max():
        return candidate
    return beta


def influence(data: Dataset, outcome: np.ndarray, model: FittedModel) -> InfluenceMatrix:
    """Rows h_i = M_x^{-1} (y_i - p_i) x_i at the fitted coefficients"""
    X = data.X
    residual = np.asarray(outcome, dtype=float) - model.probabilities(X)
    H = spd_solve(model.m_x, (X * residual[:, None]).T).T
    return InfluenceMatrix(H=H, norms=np.linalg.norm(H, axis=1))
