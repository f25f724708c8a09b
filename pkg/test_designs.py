"""Tests for case-control, OSMAC, OSSAT, strata construction and Neyman allocation"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from designs.case_control import case_control
from designs.individualized import clamp_intensities, osmac, ossat, ossat_scores
from designs.stratified import (
    adaptive_two_wave, apportion, build_strata, exact_strata, neyman_allocation,
    pilot_stratum_sd, quantile_bins, second_wave_allocation, strata_for_rule, within_stratum_sd
)
from helper.errors import (
    AllZeroNorms, BudgetBelowStratumCount, DesignError, DimensionMismatch, InfeasibleBudget,
    MissingOutcomeColumns, NegativeRadicand,
)
from helper.logistic import fit_weighted_mle, influence
from helper.models import (
    Dataset, Mechanism, OutcomeGuard, StrataAssignment, StrataRule, StratifiedDesign
)
from helper.numerics import RngStream


def _strata(counts):
    counts = np.asarray(counts, dtype=np.int64)
    return StrataAssignment(stratum_of=np.repeat(np.arange(len(counts)), counts),
                            counts=counts, labels=[(k,) for k in range(len(counts))])


# case-control

def test_case_control_balanced():
    design = case_control(np.array([1, 0, 0, 1, 0, 0]), 4)
    assert_array_equal(design.allocation, [2, 2])
    assert_array_equal(design.strata.counts, [4, 2])


def test_case_control_rare_cases():
    y = np.zeros(100, dtype=int)
    y[[5, 40, 77]] = 1
    design = case_control(y, 20)
    assert_array_equal(design.allocation, [17, 3])
    assert_array_equal(design.strata.members(1), [5, 40, 77])


def test_case_control_rare_controls():
    y = np.ones(100, dtype=int)
    y[:5] = 0
    design = case_control(y, 20)
    assert_array_equal(design.allocation, [5, 15])


def test_case_control_census():
    y = np.zeros(100, dtype=int)
    y[:3] = 1
    design = case_control(y, 100)
    assert_array_equal(design.allocation, design.strata.counts)
    assert_array_equal(design.inclusion_probabilities(), np.ones(100))


def test_case_control_errors():
    with pytest.raises(InfeasibleBudget):
        case_control(np.zeros(10, dtype=int), 4)
    with pytest.raises(InfeasibleBudget):
        case_control(np.array([0, 1, 0]), 1)
    with pytest.raises(InfeasibleBudget):
        case_control(np.array([0, 1, 0]), 4)


# OSMAC

def test_osmac_equal_norms():
    design = osmac(np.full(10, 2.5), 4)
    assert_allclose(design.pi, 0.4)
    assert design.mechanism == Mechanism.POISSON


def test_osmac_clamps_and_redistributes():
    design = osmac(np.array([9.0, 1.0, 1.0, 1.0]), 2)
    assert_allclose(design.pi, [1.0, 1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_osmac_zero_norm_floor():
    design = osmac(np.array([0.0, 1.0, 1.0, 1.0]), 2)
    floor = 2 * 0.01 / 4
    assert design.pi[0] == pytest.approx(floor)
    assert_allclose(design.pi[1:], (2 - floor) / 3)
    assert design.n == pytest.approx(2.0, abs=1e-12)


def test_osmac_errors():
    with pytest.raises(AllZeroNorms):
        osmac(np.zeros(5), 2)
    with pytest.raises(InfeasibleBudget):
        osmac(np.ones(4), 5)
    with pytest.raises(InfeasibleBudget):
        osmac(np.ones(4), 0)


def test_osmac_invariants(random_rows):
    norms = np.linalg.norm(random_rows(500, 3), axis=1)
    for n in (10, 100, 400):
        pi = osmac(norms, n).pi
        assert pi.sum() == pytest.approx(n, abs=1e-9)
        assert pi.max() <= 1.0
        assert pi.min() > 0.0
        assert_allclose(clamp_intensities(pi, n), pi, rtol=1e-12)


def test_osmac_monotone_in_norm(random_rows):
    norms = np.linalg.norm(random_rows(300, 3), axis=1)
    pi = osmac(norms, 60).pi
    assert np.all(np.diff(pi[np.argsort(norms)]) >= 0)
    free = pi < 1.0
    ratio = pi[free] / norms[free]
    assert_allclose(ratio, ratio[0], rtol=1e-12)


def test_osmac_unclamped_units_stay_proportional():
    norms = np.concatenate([[40.0, 30.0], np.linspace(0.5, 2.0, 50)])
    pi = osmac(norms, 10).pi
    assert_array_equal(pi[:2], [1.0, 1.0])
    assert_allclose(pi[2:], norms[2:] * 8 / norms[2:].sum(), rtol=1e-12)
    assert np.all(np.diff(pi[2:]) > 0)


def test_osmac_with_replacement_mechanism():
    design = osmac(np.ones(6), 3, Mechanism.WITH_REPLACEMENT)
    assert design.mechanism == Mechanism.WITH_REPLACEMENT


# OSSAT

def _fitted(seed=0, N=300):
    generator = np.random.default_rng(seed)
    X = np.column_stack([np.ones(N), generator.normal(size=(N, 2))])
    y = (generator.random(N) < 1 / (1 + np.exp(-(X @ [0.2, 0.7, -0.4])))).astype(int)
    data = Dataset(X=X, y=y)
    return data, fit_weighted_mle(data, y)


def test_ossat_with_perfect_surrogate_equals_osmac():
    data, model = _fitted()
    p_hat = model.probabilities(data.X)
    H = influence(data, data.y, model)
    expected = osmac(H.norms, 50).pi
    got = ossat(p_hat, data.y.astype(float), data, model.m_x, 50).pi
    assert_allclose(got, expected, rtol=1e-10)


def test_ossat_uninformative_probabilities():
    data, model = _fitted(seed=1)
    half = np.full(data.N, 0.5)
    scores = ossat_scores(half, half, data.X, model.m_x)
    leverage = np.linalg.norm(np.linalg.solve(model.m_x, data.X.T).T, axis=1)
    assert_allclose(scores, 0.5 * leverage, rtol=1e-12)


def test_ossat_scalar_recomputation():
    X = np.column_stack([np.ones(5), [-1.0, 0.5, 2.0, -0.3, 1.1]])
    m_x = np.array([[0.3, 0.05], [0.05, 0.4]])
    p = np.array([0.1, 0.4, 0.7, 0.2, 0.9])
    p_s = np.array([0.3, 0.35, 0.95, 0.05, 0.6])
    scores = ossat_scores(p, p_s, X, m_x)

    det = m_x[0, 0] * m_x[1, 1] - m_x[0, 1] ** 2
    for i in range(5):
        a = (m_x[1, 1] * X[i, 0] - m_x[0, 1] * X[i, 1]) / det
        b = (m_x[0, 0] * X[i, 1] - m_x[0, 1] * X[i, 0]) / det
        expected = np.sqrt(p_s[i] - 2 * p_s[i] * p[i] + p[i] ** 2) * np.hypot(a, b)
        assert scores[i] == pytest.approx(expected, rel=1e-12)


def test_ossat_inconsistent_probabilities():
    X = np.column_stack([np.ones(2), [0.5, -1.0]])
    m_x = np.eye(2)
    with pytest.raises(NegativeRadicand):
        ossat_scores(np.array([0.0, 0.3]), np.array([-0.01, 0.4]), X, m_x)
    # radicand 0.74 but p out of range
    with pytest.raises(DimensionMismatch):
        ossat_scores(np.array([1.2, 0.3]), np.array([0.5, 0.4]), X, m_x)


def test_ossat_budget_and_mechanism():
    data, model = _fitted(seed=2)
    p_hat = model.probabilities(data.X)
    design = ossat(p_hat, p_hat, data, model.m_x, 40)
    assert design.mechanism == Mechanism.WITH_REPLACEMENT
    assert design.n == pytest.approx(40, abs=1e-9)
    with pytest.raises(InfeasibleBudget):
        ossat(p_hat, p_hat, data, model.m_x, 0)


# strata

def test_quantile_bins():
    bins = quantile_bins(np.arange(1.0, 11.0))
    assert_array_equal(bins, [0, 0, 1, 1, 1, 1, 1, 1, 2, 2])


def test_build_strata_continuous_scores():
    generator = np.random.default_rng(3)
    scores = generator.normal(size=(2000, 3))
    outcome = (generator.random(2000) < 0.3).astype(int)
    strata = build_strata(outcome, scores)
    assert strata.K <= 54
    assert strata.counts.sum() == 2000
    assert np.all(strata.counts > 0)
    for k in range(strata.K):
        members = strata.members(k)
        assert np.all(outcome[members] == strata.labels[k][0])


def test_constant_score_column_collapses():
    outcome = np.array([0, 1, 0, 1, 1, 0, 0, 1])
    strata = build_strata(outcome, np.full(8, 3.0))
    assert strata.K == 2
    assert_array_equal(strata.counts, [4, 4])


def test_build_strata_rejects_bad_cuts():
    with pytest.raises(ValueError):
        build_strata(np.zeros(5), np.arange(5.0), cuts=(0.8, 0.2))


def test_exact_strata_on_discrete_cells():
    generator = np.random.default_rng(4)
    X = (generator.random((400, 3)) < 0.5).astype(float)
    y = (generator.random(400) < 0.5).astype(int)
    strata = exact_strata(y, X)
    assert strata.K <= 16
    for k in range(strata.K):
        outcome, levels = strata.labels[k]
        members = strata.members(k)
        assert np.all(y[members] == outcome)
        assert np.all(X[members] == np.array(levels, dtype=float))


def test_strata_for_rule_uses_three_influence_columns(small_cohort):
    model = fit_weighted_mle(small_cohort, small_cohort.y)
    H = influence(small_cohort, small_cohort.y, model)
    strata = strata_for_rule(StrataRule.INFLUENCE, small_cohort.y, small_cohort, H)
    assert all(len(label[1]) == 3 for label in strata.labels)
    by_covariates = strata_for_rule(StrataRule.COVARIATES, small_cohort.y, small_cohort)
    assert by_covariates.K <= 54
    with pytest.raises(ValueError):
        strata_for_rule(StrataRule.INFLUENCE, small_cohort.y, small_cohort)


# Neyman allocation

def test_neyman_symmetric():
    design = neyman_allocation(_strata([50, 50, 50, 50]), np.ones(4), 100)
    assert_array_equal(design.allocation, [25, 25, 25, 25])


def test_neyman_two_strata():
    design = neyman_allocation(_strata([100, 100]), np.array([3.0, 1.0]), 40)
    assert_allclose(design.targets, [30.0, 10.0])
    assert_array_equal(design.allocation, [30, 10])


def test_neyman_zero_sd_pinned_at_one():
    design = neyman_allocation(_strata([100, 100, 100]), np.array([2.0, 0.0, 1.0]), 31)
    assert_array_equal(design.allocation, [20, 1, 10])


def test_neyman_all_zero_sd_is_proportional():
    design = neyman_allocation(_strata([30, 10]), np.zeros(2), 8)
    assert_array_equal(design.allocation, [6, 2])


def test_neyman_ties_go_to_lower_index():
    design = neyman_allocation(_strata([10, 10, 10]), np.ones(3), 4)
    assert_array_equal(design.allocation, [2, 1, 1])


def test_neyman_sums_to_budget_and_respects_sizes():
    generator = np.random.default_rng(5)
    for _ in range(50):
        counts = generator.integers(1, 40, size=6)
        sd = generator.exponential(size=6)
        n = int(generator.integers(6, counts.sum() + 1))
        design = neyman_allocation(_strata(counts), sd, n)
        assert design.n == n
        assert np.all(design.allocation >= 1)
        assert np.all(design.allocation <= counts)


def test_neyman_scale_invariant():
    generator = np.random.default_rng(9)
    for _ in range(30):
        counts = generator.integers(2, 50, size=5)
        sd = generator.exponential(size=5)
        n = int(generator.integers(5, counts.sum() + 1))
        base = neyman_allocation(_strata(counts), sd, n)
        for factor in (4.0, 3.7):
            scaled = neyman_allocation(_strata(counts), sd * factor, n)
            assert_array_equal(scaled.allocation, base.allocation)
            assert_allclose(scaled.targets, base.targets, atol=1e-8)


def test_neyman_errors():
    with pytest.raises(BudgetBelowStratumCount):
        neyman_allocation(_strata([5, 5, 5]), np.ones(3), 2)
    with pytest.raises(InfeasibleBudget):
        neyman_allocation(_strata([5, 5]), np.ones(2), 11)
    with pytest.raises(ValueError):
        neyman_allocation(_strata([5, 5]), np.ones(3), 4)


def test_apportion_clamps_to_upper_bound():
    allocation, targets = apportion(np.ones(2), 12, np.ones(2), np.array([3, 100]))
    assert_array_equal(allocation, [3, 9])
    assert_allclose(targets, [3.0, 9.0])


def test_stratified_design_validates_allocation():
    with pytest.raises(DesignError):
        StratifiedDesign(strata=_strata([3, 3]), allocation=np.array([0, 2]))
    with pytest.raises(DesignError):
        StratifiedDesign(strata=_strata([3, 3]), allocation=np.array([4, 2]))


# two-wave

def test_pilot_sd_pooled_fallback():
    rows = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [10.0, 0.0]])
    sd = pilot_stratum_sd(rows, np.array([0, 0, 0, 1]), 2)
    assert sd[0] == pytest.approx(1.0)
    assert sd[1] == pytest.approx(np.sqrt(50.0 / 3.0))


def test_second_wave_floors_overfilled_strata():
    allocation = second_wave_allocation(_strata([100, 100]), np.array([1.0, 3.0]),
                                        np.array([15, 5]), 40)
    assert_array_equal(allocation, [0, 20])


def test_two_waves_add_up_to_neyman_with_exact_sd():
    generator = np.random.default_rng(13)
    for _ in range(25):
        counts = generator.integers(10, 80, size=4)
        strata = _strata(counts)
        H = generator.standard_t(3, size=(strata.N, 2))
        sd = within_stratum_sd(H, strata)
        n = int(generator.integers(8, strata.N // 2))
        target = neyman_allocation(strata, sd, n)
        wave1 = np.maximum(1, np.floor(target.targets / 2)).astype(np.int64)
        wave2 = second_wave_allocation(strata, sd, wave1, n)
        assert_array_equal(wave1 + wave2, target.allocation)


def test_second_wave_nothing_left():
    allocation = second_wave_allocation(_strata([10, 10]), np.ones(2), np.array([3, 3]), 6)
    assert_array_equal(allocation, [0, 0])


def test_adaptive_two_wave_reveals_only_pilot(small_cohort):
    guard = OutcomeGuard(small_cohort.y)
    design = adaptive_two_wave(small_cohort.without_outcome(), 200, 600,
                               rng=RngStream(9, 0), guard=guard)
    assert design.wave1.n == 200
    assert design.wave1_draw.realized_size == 200
    assert int(design.wave2_allocation.sum()) == 400
    assert design.n == 600
    assert np.all(design.combined_allocation <= design.strata.counts)
    assert_array_equal(guard.revealed, design.wave1_draw.indices)


def test_adaptive_two_wave_requirements(small_cohort):
    with pytest.raises(MissingOutcomeColumns):
        adaptive_two_wave(Dataset(X=small_cohort.X, y=small_cohort.y), 100, 300)
    with pytest.raises(InfeasibleBudget):
        adaptive_two_wave(small_cohort, 300, 300)
