"""Stratified designs: strata construction, Neyman allocation and the adaptive two-wave design"""

import logging
from typing import Optional, Tuple, Union

import numpy as np

from designs.sampling import draw_stratified
from designs.variance import within_stratum_covariances
from helper.errors import (
    BudgetBelowStratumCount, DegenerateDesign, InfeasibleBudget, MissingOutcomeColumns,
    NotPositiveDefinite,
)
from helper.logistic import fit_weighted_mle, influence
from helper.models import (
    Dataset, FittedModel, InfluenceMatrix, OutcomeGuard, StrataAssignment, StrataRule,
    StratifiedDesign, TwoWaveDesign,
)
from helper.numerics import RngStream, empirical_quantile

logger = logging.getLogger(__name__)

DEFAULT_CUTS = (0.2, 0.8)
INFLUENCE_COLUMNS = 3
TARGET_DECIMALS = 9


def _strata_from_keys(keys: np.ndarray) -> StrataAssignment:
    """One stratum per distinct key row, in lexicographic key order"""
    levels, stratum_of, counts = np.unique(
        keys, axis=0, return_inverse=True, return_counts=True
    )
    return StrataAssignment(
        stratum_of=stratum_of.reshape(-1).astype(np.int64),
        counts=counts.astype(np.int64),
        labels=[(_scalar(row[0]), tuple(_scalar(v) for v in row[1:])) for row in levels],
    )


def _scalar(value):
    value = float(value)
    return int(value) if value.is_integer() else value


def quantile_bins(column: np.ndarray, cuts: Tuple[float, float] = DEFAULT_CUTS) -> np.ndarray:
    """0 at or below the low cut, 2 above the high cut, 1 in between"""
    low = empirical_quantile(column, cuts[0])
    high = empirical_quantile(column, cuts[1])
    bins = np.ones(column.shape[0], dtype=np.int64)
    bins[column <= low] = 0
    bins[column > high] = 2
    return bins


def build_strata(outcome_like: np.ndarray, score_columns: np.ndarray,
                 cuts: Tuple[float, float] = DEFAULT_CUTS) -> StrataAssignment:
    """Outcome level crossed with three quantile bins per score column; empty cells dropped"""
    scores = np.asarray(score_columns, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    if scores.shape[1] < 1:
        raise ValueError("Need at least one score column")
    if not 0.0 < cuts[0] < cuts[1] < 1.0:
        raise ValueError(f"Cuts must increase strictly inside (0, 1), got {cuts}")

    bins = np.column_stack([quantile_bins(scores[:, j], cuts) for j in range(scores.shape[1])])
    keys = np.column_stack([np.asarray(outcome_like, dtype=np.int64), bins])
    strata = _strata_from_keys(keys)
    logger.debug(f"Built {strata.K} strata from {scores.shape[1]} score columns")
    return strata


def exact_strata(outcome_like: np.ndarray, columns: np.ndarray) -> StrataAssignment:
    """One stratum per observed (outcome, covariate levels) cell"""
    columns = np.asarray(columns, dtype=float)
    if columns.ndim == 1:
        columns = columns[:, None]
    keys = np.column_stack([np.asarray(outcome_like, dtype=float), columns])
    return _strata_from_keys(keys)


def within_stratum_sd(H: Union[InfluenceMatrix, np.ndarray],
                      strata: StrataAssignment) -> np.ndarray:
    """sqrt(Tr V_{h,k}) per stratum"""
    V = within_stratum_covariances(H, strata)
    return np.sqrt(np.clip(np.einsum("kii->k", V), 0.0, None))


def _largest_remainder(targets: np.ndarray, total: int, lower: np.ndarray,
                       upper: np.ndarray) -> np.ndarray:
    """Hamilton rounding inside [lower, upper]; ties go to the lower stratum index"""
    base = np.clip(np.floor(targets + 10.0 ** -TARGET_DECIMALS), lower, upper).astype(np.int64)
    remainder = targets - base
    order = np.argsort(-remainder, kind="stable")
    residual = total - int(base.sum())
    while residual > 0:
        grew = False
        for k in order:
            if residual == 0:
                break
            if base[k] < upper[k]:
                base[k] += 1
                residual -= 1
                grew = True
        if not grew:
            raise InfeasibleBudget(f"Cannot place {residual} more units within stratum sizes")
    while residual < 0:
        shrank = False
        for k in order[::-1]:
            if residual == 0:
                break
            if base[k] > lower[k]:
                base[k] -= 1
                residual += 1
                shrank = True
        if not shrank:
            raise BudgetBelowStratumCount("Budget is below the per-stratum minimum")
    return base


def apportion(weights: np.ndarray, total: int, lower: np.ndarray,
              upper: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split an integer total in proportion to weights within per-stratum bounds.

    Real-valued targets are clamped to [lower, upper] by repeatedly fixing
    violators and re-sharing the rest, then integerized by largest remainder.

    Returns:
        (integer allocation, real-valued targets)
    """
    weights = np.asarray(weights, dtype=float)
    lower = np.asarray(lower, dtype=np.int64)
    upper = np.asarray(upper, dtype=np.int64)
    if total < lower.sum():
        raise BudgetBelowStratumCount(f"Budget {total} is below the minimum {lower.sum()}")
    if total > upper.sum():
        raise InfeasibleBudget(f"Budget {total} exceeds the capacity {upper.sum()}")

    K = weights.shape[0]
    targets = np.zeros(K)
    fixed = lower >= upper
    targets[fixed] = upper[fixed]
    for _ in range(K + 1):
        free = ~fixed
        if not free.any():
            break
        remaining = total - targets[fixed].sum()
        share = weights[free]
        if share.sum() > 0:
            targets[free] = remaining * share / share.sum()
        else:
            targets[free] = remaining / free.sum()
        over = free & (targets > upper)
        if over.any():
            targets[over] = upper[over]
            fixed |= over
            continue
        under = free & (targets < lower)
        if under.any():
            targets[under] = lower[under]
            fixed |= under
            continue
        break

    targets = np.round(targets, TARGET_DECIMALS)
    return _largest_remainder(targets, total, lower, upper), targets


def neyman_allocation(strata: StrataAssignment, stratum_sd: np.ndarray,
                      n: int) -> StratifiedDesign:
    """
    n_k proportional to N_k * sd_k, integerized to sum to n exactly.

    Strata with sd = 0 are pinned at one unit. When every sd is zero the
    budget is shared in proportion to N_k.
    """
    sd = np.asarray(stratum_sd, dtype=float)
    if sd.shape != (strata.K,):
        raise ValueError("Need one standard deviation per stratum")
    if np.any(sd < 0) or not np.all(np.isfinite(sd)):
        raise ValueError("Standard deviations must be finite and non-negative")
    if n < strata.K:
        raise BudgetBelowStratumCount(f"Budget {n} is below the stratum count {strata.K}")
    if n > strata.N:
        raise InfeasibleBudget(f"Budget {n} exceeds population size {strata.N}")

    counts = strata.counts
    lower = np.ones(strata.K, dtype=np.int64)
    if np.all(sd == 0):
        weights = counts.astype(float)
        upper = counts.copy()
    else:
        weights = counts * sd
        upper = np.where(sd == 0, 1, counts)
        if n > upper.sum():
            logger.warning("Zero-variance strata released from their single-unit pin")
            upper = counts.copy()

    allocation, targets = apportion(weights, n, lower, upper)
    return StratifiedDesign(strata=strata, allocation=allocation, targets=targets)


def strata_for_rule(rule: StrataRule, outcome_like: np.ndarray, data: Dataset,
                    H: Optional[InfluenceMatrix] = None,
                    cuts: Tuple[float, float] = DEFAULT_CUTS) -> StrataAssignment:
    """Strata on the influence columns for beta_1..beta_3, on the covariates, or on exact cells"""
    if rule == StrataRule.EXACT:
        return exact_strata(outcome_like, data.X[:, 1:])
    if rule == StrataRule.COVARIATES:
        return build_strata(outcome_like, data.X[:, 1:], cuts)
    if H is None:
        raise ValueError("Influence stratification needs an influence matrix")
    last = min(INFLUENCE_COLUMNS, H.dim - 1)
    return build_strata(outcome_like, H.H[:, 1:last + 1], cuts)


def pilot_stratum_sd(pilot_influence: np.ndarray, pilot_strata: np.ndarray, K: int) -> np.ndarray:
    """
    Root-trace sample SD of pilot influence rows per stratum.

    Strata holding fewer than two pilot units take the pooled SD of all
    pilot rows.
    """
    rows = np.asarray(pilot_influence, dtype=float)
    pooled = float(np.sqrt(np.trace(np.atleast_2d(np.cov(rows, rowvar=False, ddof=1)))))
    sd = np.empty(K)
    for k in range(K):
        members = rows[pilot_strata == k]
        if members.shape[0] < 2:
            logger.warning(f"Stratum {k} has {members.shape[0]} pilot units, using pooled SD")
            sd[k] = pooled
            continue
        cov = np.atleast_2d(np.cov(members, rowvar=False, ddof=1))
        sd[k] = np.sqrt(max(np.trace(cov), 0.0))
    return sd


def second_wave_allocation(strata: StrataAssignment, pilot_sd: np.ndarray,
                           wave1_allocation: np.ndarray, n: int) -> np.ndarray:
    """Neyman(n) targets less the wave-1 counts, floored at 0, integerized to n - n1"""
    wave1 = np.asarray(wave1_allocation, dtype=np.int64)
    remaining = n - int(wave1.sum())
    capacity = strata.counts - wave1
    if remaining < 0:
        raise InfeasibleBudget("Pilot is larger than the total budget")
    if remaining == 0:
        return np.zeros(strata.K, dtype=np.int64)

    targets = neyman_allocation(strata, pilot_sd, n).targets
    deficit = np.clip(targets - wave1, 0.0, None)
    deficit = np.minimum(deficit, capacity)
    if deficit.sum() <= 0:
        deficit = capacity.astype(float)
    allocation, _ = apportion(deficit, remaining, np.zeros(strata.K, dtype=np.int64), capacity)
    return allocation


def _pilot_influence(pilot: Dataset, y_pilot: np.ndarray, weights: np.ndarray,
                     fallback: FittedModel) -> np.ndarray:
    try:
        model = fit_weighted_mle(pilot, y_pilot, weights)
    except DegenerateDesign as e:
        logger.warning(f"Pilot fit failed ({e}); using the surrogate fit")
        model = fallback
    try:
        return influence(pilot, y_pilot, model).H
    except NotPositiveDefinite:
        logger.warning("Pilot information matrix is singular; using the surrogate fit")
        return influence(pilot, y_pilot, fallback).H


def adaptive_two_wave(data: Dataset, n1: int, n: int,
                      cuts: Tuple[float, float] = DEFAULT_CUTS,
                      rng: Optional[RngStream] = None,
                      guard: Optional[OutcomeGuard] = None,
                      rule: StrataRule = StrataRule.INFLUENCE) -> TwoWaveDesign:
    """
    Two-wave stratified design driven by the surrogate.

    Wave 1 is a Neyman allocation of n1 using surrogate influence functions
    from the full-cohort fit on s. The true outcome is then revealed for the
    pilot units only, and wave 2 tops each stratum up towards the Neyman
    allocation of n computed from the pilot's true-outcome influence SDs.

    Args:
        data: Cohort with the surrogate s; y is never read from it
        n1: Pilot size
        n: Total budget
        cuts: Quantile cuts for the strata
        rng: Stream for the pilot draw
        guard: Releases y for sampled units
        rule: What the strata are built on

    Returns:
        TwoWaveDesign holding the realized pilot
    """
    if data.s is None:
        raise MissingOutcomeColumns("Two-wave design needs the surrogate outcome")
    if guard is None:
        if data.y is None:
            raise MissingOutcomeColumns("Two-wave design needs the true outcome for the pilot")
        guard = OutcomeGuard(data.y)
    if not 0 < n1 < n <= data.N:
        raise InfeasibleBudget(f"Need 0 < n1 < n <= N, got n1={n1}, n={n}, N={data.N}")
    rng = rng if rng is not None else RngStream(0)

    surrogate_model = fit_weighted_mle(data, data.s)
    H_s = influence(data, data.s, surrogate_model)
    strata = strata_for_rule(rule, data.s, data, H_s, cuts)
    wave1 = neyman_allocation(strata, within_stratum_sd(H_s, strata), n1)
    wave1_draw = draw_stratified(wave1, rng)

    y_pilot = guard.reveal(wave1_draw.indices)
    pilot = data.subset(wave1_draw.indices)
    pilot_H = _pilot_influence(pilot, y_pilot, wave1_draw.weight, surrogate_model)
    pilot_sd = pilot_stratum_sd(pilot_H, strata.stratum_of[wave1_draw.indices], strata.K)

    wave2 = second_wave_allocation(strata, pilot_sd, wave1.allocation, n)
    logger.info(f"Two-wave design: K={strata.K}, pilot={n1}, second wave={int(wave2.sum())}")
    return TwoWaveDesign(wave1=wave1, wave1_draw=wave1_draw, wave2_allocation=wave2,
                         pilot_sd=pilot_sd)
