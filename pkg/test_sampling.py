"""Tests for the sample draws and their estimation weights"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from designs.sampling import (
    draw, draw_poisson, draw_second_wave, draw_stratified, draw_with_replacement
)
from helper.errors import DesignError
from helper.models import (
    IndividualizedDesign, Mechanism, StrataAssignment, StratifiedDesign, TwoWaveDesign
)
from helper.numerics import RngStream


def _strata(counts):
    counts = np.asarray(counts, dtype=np.int64)
    return StrataAssignment(stratum_of=np.repeat(np.arange(len(counts)), counts),
                            counts=counts, labels=[(k,) for k in range(len(counts))])


def test_poisson_census(rng):
    sample = draw_poisson(IndividualizedDesign(pi=np.ones(25)), rng)
    assert_array_equal(sample.indices, np.arange(25))
    assert_array_equal(sample.weight, np.ones(25))
    assert sample.realized_size == 25


def test_poisson_realized_size(rng):
    sample = draw_poisson(IndividualizedDesign(pi=np.full(10_000, 0.5)), rng)
    assert abs(sample.realized_size - 5000) <= 200
    assert_array_equal(sample.weight, np.full(sample.indices.shape[0], 2.0))


def test_poisson_mean_size_matches_budget():
    pi = np.random.default_rng(0).uniform(0.01, 0.3, size=500)
    sizes = [draw_poisson(IndividualizedDesign(pi=pi), RngStream(3, r)).realized_size
             for r in range(400)]
    se = np.sqrt(np.sum(pi * (1 - pi)) / len(sizes))
    assert abs(np.mean(sizes) - pi.sum()) <= 4 * se


def test_poisson_rejects_other_mechanisms(rng):
    design = IndividualizedDesign(pi=np.full(4, 0.5), mechanism=Mechanism.WITH_REPLACEMENT)
    with pytest.raises(DesignError):
        draw_poisson(design, rng)


def test_with_replacement_weights(rng):
    pi = np.array([0.5, 1.0, 1.5, 1.0])
    sample = draw_with_replacement(IndividualizedDesign(pi=pi), 8, rng)
    p = pi / pi.sum()
    assert sample.realized_size == 8
    assert_allclose(sample.weight, sample.multiplicity / (8 * p[sample.indices]))
    assert np.all(np.diff(sample.indices) > 0)


def test_with_replacement_frequencies(rng):
    p = np.array([0.5, 0.3, 0.2])
    n = 100_000
    sample = draw_with_replacement(IndividualizedDesign(pi=p * 2), n, rng)
    frequencies = np.zeros(3)
    frequencies[sample.indices] = sample.multiplicity / n
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(frequencies - p) <= 4 * se)


def test_with_replacement_uniform_census_size():
    N = 50
    design = IndividualizedDesign(pi=np.ones(N), mechanism=Mechanism.WITH_REPLACEMENT)
    totals = np.zeros(N)
    for r in range(200):
        sample = draw_with_replacement(design, N, RngStream(5, r))
        totals[sample.indices] += sample.multiplicity
    assert totals.sum() == N * 200
    assert abs(totals.mean() / 200 - 1.0) < 1e-12


def test_stratified_census(rng):
    strata = _strata([3, 4])
    sample = draw_stratified(StratifiedDesign(strata=strata, allocation=np.array([3, 4])), rng)
    assert_array_equal(sample.indices, np.arange(7))
    assert_array_equal(sample.weight, np.ones(7))


def test_single_stratum_is_srs(rng):
    sample = draw_stratified(StratifiedDesign(strata=_strata([40]), allocation=np.array([10])), rng)
    assert sample.realized_size == 10
    assert np.unique(sample.indices).shape[0] == 10
    assert_allclose(sample.weight, 4.0)


def test_stratified_sizes_and_weights(rng):
    strata = _strata([10, 30, 60])
    design = StratifiedDesign(strata=strata, allocation=np.array([2, 5, 12]))
    sample = draw_stratified(design, rng)
    per_stratum = np.bincount(strata.stratum_of[sample.indices], minlength=3)
    assert_array_equal(per_stratum, [2, 5, 12])
    assert_allclose(sample.weight, (strata.counts / design.allocation)[strata.stratum_of[sample.indices]])


def test_joint_inclusion_within_stratum():
    design = StratifiedDesign(strata=_strata([4, 4]), allocation=np.array([2, 2]))
    draws = 20_000
    together = 0
    for r in range(draws):
        mask = draw_stratified(design, RngStream(11, r)).inclusion_mask(8)
        together += bool(mask[0] and mask[1])
    p = 1 / 6
    se = np.sqrt(p * (1 - p) / draws)
    assert abs(together / draws - p) <= 4 * se


def test_joint_inclusion_across_strata():
    design = StratifiedDesign(strata=_strata([4, 4]), allocation=np.array([2, 2]))
    draws = 20_000
    together = 0
    for r in range(draws):
        mask = draw_stratified(design, RngStream(12, r)).inclusion_mask(8)
        together += bool(mask[0] and mask[4])
    p = 1 / 4
    se = np.sqrt(p * (1 - p) / draws)
    assert abs(together / draws - p) <= 4 * se


def _weighted_totals(make_draw, values, draws=20_000):
    return np.array([np.sum(s.weight * values[s.indices])
                     for s in (make_draw(RngStream(31, r)) for r in range(draws))])


@pytest.mark.parametrize("mechanism", ["poisson", "with_replacement", "stratified"])
def test_weighted_total_is_unbiased(mechanism):
    generator = np.random.default_rng(17)
    values = generator.normal(2.0, 3.0, size=15)
    pi = generator.uniform(0.2, 0.9, size=15)
    if mechanism == "poisson":
        design = IndividualizedDesign(pi=pi)
        totals = _weighted_totals(lambda r: draw_poisson(design, r), values)
    elif mechanism == "with_replacement":
        design = IndividualizedDesign(pi=pi, mechanism=Mechanism.WITH_REPLACEMENT)
        totals = _weighted_totals(lambda r: draw_with_replacement(design, 5, r), values)
    else:
        design = StratifiedDesign(strata=_strata([4, 6, 5]), allocation=np.array([2, 3, 1]))
        totals = _weighted_totals(lambda r: draw_stratified(design, r), values)
    se = totals.std(ddof=1) / np.sqrt(totals.shape[0])
    assert abs(totals.mean() - values.sum()) <= 4 * se


def test_second_wave_tops_up_pilot(rng):
    strata = _strata([10, 10])
    wave1 = StratifiedDesign(strata=strata, allocation=np.array([2, 3]))
    pilot = draw_stratified(wave1, rng.substream(0))
    design = TwoWaveDesign(wave1=wave1, wave1_draw=pilot, wave2_allocation=np.array([4, 1]),
                           pilot_sd=np.ones(2))
    sample = draw_second_wave(design, rng.substream(1))

    assert sample.realized_size == 10
    assert np.unique(sample.indices).shape[0] == 10
    assert set(pilot.indices) <= set(sample.indices)
    per_stratum = np.bincount(strata.stratum_of[sample.indices], minlength=2)
    assert_array_equal(per_stratum, [6, 4])
    assert_allclose(sample.weight, np.array([10 / 6, 10 / 4])[strata.stratum_of[sample.indices]])


def test_draw_dispatch(rng):
    stratified = StratifiedDesign(strata=_strata([5, 5]), allocation=np.array([1, 2]))
    assert draw(stratified, rng).realized_size == 3

    with_replacement = IndividualizedDesign(pi=np.full(10, 0.4), mechanism=Mechanism.WITH_REPLACEMENT)
    assert draw(with_replacement, rng).realized_size == 4
    assert draw(with_replacement, rng, n=7).realized_size == 7

    census = IndividualizedDesign(pi=np.ones(6))
    assert draw(census, rng).realized_size == 6


def test_draws_are_reproducible():
    design = IndividualizedDesign(pi=np.full(100, 0.3))
    a = draw_poisson(design, RngStream(8, 2))
    b = draw_poisson(design, RngStream(8, 2))
    assert_array_equal(a.indices, b.indices)
