"""Realize designs as random samples with estimation weights"""

import logging
from typing import Optional, Union

import numpy as np

from helper.errors import DesignError
from helper.models import (
    IndividualizedDesign, Mechanism, SampleDraw, StratifiedDesign, TwoWaveDesign
)
from helper.numerics import RngStream

logger = logging.getLogger(__name__)


def draw_poisson(design: IndividualizedDesign, rng: RngStream) -> SampleDraw:
    """Independent Bernoulli(pi_i) inclusion, weight 1/pi_i; the realized size is random"""
    if design.mechanism != Mechanism.POISSON:
        raise DesignError(f"Poisson draw needs a Poisson design, got {design.mechanism.value}")
    pi = design.pi
    included = rng.generator().random(pi.shape[0]) < pi
    indices = np.flatnonzero(included)
    return SampleDraw(
        indices=indices,
        multiplicity=np.ones(indices.shape[0], dtype=np.int64),
        weight=1.0 / pi[indices],
    )


def draw_with_replacement(design: IndividualizedDesign, n: int, rng: RngStream) -> SampleDraw:
    """n categorical draws with p_i = pi_i / sum(pi), Hansen-Hurwitz weights m_i / (n p_i)"""
    p = design.pi / design.pi.sum()
    counts = rng.generator().multinomial(n, p)
    indices = np.flatnonzero(counts)
    multiplicity = counts[indices].astype(np.int64)
    return SampleDraw(
        indices=indices,
        multiplicity=multiplicity,
        weight=multiplicity / (n * p[indices]),
    )


def draw_stratified(design: StratifiedDesign, rng: RngStream) -> SampleDraw:
    """SRS without replacement of n_k units inside every stratum, weight N_k / n_k"""
    generator = rng.generator()
    strata = design.strata
    chosen, weights = [], []
    for k in range(strata.K):
        n_k = int(design.allocation[k])
        picked = generator.choice(strata.members(k), size=n_k, replace=False)
        chosen.append(picked)
        weights.append(np.full(n_k, strata.counts[k] / n_k))
    return _assemble(np.concatenate(chosen), np.concatenate(weights))


def draw_second_wave(design: TwoWaveDesign, rng: RngStream) -> SampleDraw:
    """
    Add wave 2 to the realized pilot and return the combined sample.

    Wave-2 units come from those not taken in wave 1, so each stratum
    ends up as an SRS of size n_k1 + n_k2 with weight N_k / (n_k1 + n_k2).
    """
    generator = rng.generator()
    strata = design.strata
    taken = design.wave1_draw.inclusion_mask(strata.N)
    weights_by_stratum = design.combined_weights()

    chosen = [design.wave1_draw.indices]
    for k in range(strata.K):
        extra = int(design.wave2_allocation[k])
        if extra == 0:
            continue
        members = strata.members(k)
        remaining = members[~taken[members]]
        chosen.append(generator.choice(remaining, size=extra, replace=False))
    indices = np.concatenate(chosen)
    return _assemble(indices, weights_by_stratum[strata.stratum_of[indices]])


def draw(design: Union[StratifiedDesign, IndividualizedDesign], rng: RngStream,
         n: Optional[int] = None) -> SampleDraw:
    """Dispatch on the design's mechanism"""
    if isinstance(design, StratifiedDesign):
        return draw_stratified(design, rng)
    if design.mechanism == Mechanism.WITH_REPLACEMENT:
        return draw_with_replacement(design, n if n is not None else int(round(design.n)), rng)
    return draw_poisson(design, rng)


def _assemble(indices: np.ndarray, weights: np.ndarray) -> SampleDraw:
    order = np.argsort(indices, kind="stable")
    return SampleDraw(
        indices=indices[order],
        multiplicity=np.ones(indices.shape[0], dtype=np.int64),
        weight=weights[order],
    )
