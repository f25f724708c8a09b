"""End-to-end execution of the six subsampling strategies"""

import logging
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from designs.case_control import case_control
from designs.individualized import osmac, ossat
from designs.sampling import (
    draw, draw_second_wave, draw_stratified, draw_with_replacement
)
from designs.stratified import (
    DEFAULT_CUTS, adaptive_two_wave, neyman_allocation, strata_for_rule, within_stratum_sd
)
from helper.errors import DegenerateDesign, MissingOutcomeColumns, SolverFailure
from helper.logistic import fit_weighted_mle, influence
from helper.models import (
    Dataset, IndividualizedDesign, Mechanism, OutcomeGuard, SampleDraw, StrataRule,
    StrategyId, StrategyOutcome,
)
from helper.numerics import RngStream

logger = logging.getLogger(__name__)


class StrategyRunner:
    """Runs one strategy on one cohort: design, draw, then weighted fit"""

    def __init__(self, cuts: Tuple[float, float] = DEFAULT_CUTS,
                 strata_rule: StrataRule = StrataRule.INFLUENCE,
                 osmac_mechanism: Mechanism = Mechanism.POISSON):
        self.cuts = cuts
        self.strata_rule = strata_rule
        self.osmac_mechanism = osmac_mechanism
        self.logger = logging.getLogger(__name__)
        self._handlers: Dict[StrategyId, Callable] = {
            StrategyId.CC_TRUE: self._case_control_true,
            StrategyId.CC_SURROGATE: self._case_control_surrogate,
            StrategyId.OSMAC_ORACLE: self._osmac_oracle,
            StrategyId.OSSAT_PILOT: self._ossat_pilot,
            StrategyId.STRAT_ORACLE: self._stratified_oracle,
            StrategyId.STRAT_PILOT: self._stratified_pilot,
        }

    def run(self, data: Dataset, strategy: StrategyId, n: int, n1: int,
            rng: RngStream, guard: Optional[OutcomeGuard] = None) -> StrategyOutcome:
        """
        Execute a strategy end to end.

        Args:
            data: Cohort with y (and s for the surrogate strategies)
            strategy: Which strategy to run
            n: Total budget
            n1: Pilot size, ignored by strategies without a pilot
            rng: Stream for every random draw of this run
            guard: Outcome access guard; built from data.y when omitted

        Returns:
            StrategyOutcome with the weighted-fit coefficients
        """
        if data.y is None:
            raise MissingOutcomeColumns("Strategies need the true outcome (directly or via a guard)")
        if not strategy.is_oracle and data.s is None:
            raise MissingOutcomeColumns(f"{strategy.value} needs the surrogate outcome")

        if strategy.is_oracle:
            return self._handlers[strategy](data, n, n1, rng)
        guard = guard if guard is not None else OutcomeGuard(data.y)
        return self._handlers[strategy](data.without_outcome(), n, n1, rng, guard)

    def _fit(self, data: Dataset, sample: SampleDraw, y_sample: np.ndarray) -> StrategyOutcome:
        """Weighted fit on the drawn units; a fit that cannot start is a SolverFailure"""
        try:
            model = fit_weighted_mle(data.subset(sample.indices), y_sample, sample.weight)
        except DegenerateDesign as e:
            raise SolverFailure(f"Subsample fit failed: {e}") from e
        return StrategyOutcome(beta_hat=model.beta, realized_size=sample.realized_size,
                               converged=model.converged)

    def _case_control_true(self, data: Dataset, n: int, n1: int, rng: RngStream) -> StrategyOutcome:
        sample = draw_stratified(case_control(data.y, n), rng)
        return self._fit(data, sample, data.y[sample.indices])

    def _case_control_surrogate(self, data: Dataset, n: int, n1: int, rng: RngStream,
                                guard: OutcomeGuard) -> StrategyOutcome:
        sample = draw_stratified(case_control(data.s, n), rng)
        return self._fit(data, sample, guard.reveal(sample.indices))

    def _osmac_oracle(self, data: Dataset, n: int, n1: int, rng: RngStream) -> StrategyOutcome:
        full = fit_weighted_mle(data, data.y)
        H = influence(data, data.y, full)
        design = osmac(H.norms, n, self.osmac_mechanism)
        sample = draw(design, rng, n=n)
        return self._fit(data, sample, data.y[sample.indices])

    def ossat_design(self, data: Dataset, n: int, n1: int, rng: RngStream,
                     guard: OutcomeGuard) -> Tuple[SampleDraw, np.ndarray, IndividualizedDesign]:
        """
        First step of the surrogate-assisted strategy.

        A case-control pilot on s is drawn and its true outcomes fitted twice,
        on X alone and on (X, s), giving p_hat and p_s_hat for every unit.

        Returns:
            (pilot draw, pilot inclusion probabilities for all units, second-step design)
        """
        pilot_design = case_control(data.s, n1)
        pilot = draw_stratified(pilot_design, rng.substream(0))
        y_pilot = guard.reveal(pilot.indices)
        pilot_data = data.subset(pilot.indices)

        outcome_model = fit_weighted_mle(pilot_data, y_pilot, pilot.weight)
        with_surrogate = Dataset(X=np.column_stack([pilot_data.X, pilot_data.s]))
        surrogate_model = fit_weighted_mle(with_surrogate, y_pilot, pilot.weight)
        if not surrogate_model.converged:
            self.logger.warning("Surrogate-augmented pilot fit did not converge; using last iterate")

        p_hat = outcome_model.probabilities(data.X)
        p_s_hat = surrogate_model.probabilities(np.column_stack([data.X, data.s]))
        design = ossat(p_hat, p_s_hat, data, outcome_model.m_x, n - n1)
        return pilot, pilot_design.inclusion_probabilities(), design

    def _ossat_pilot(self, data: Dataset, n: int, n1: int, rng: RngStream,
                     guard: OutcomeGuard) -> StrategyOutcome:
        pilot, pilot_pi, design = self.ossat_design(data, n, n1, rng, guard)
        second = draw_with_replacement(design, n - n1, rng.substream(1))

        multiplicity = np.zeros(data.N, dtype=np.int64)
        multiplicity[pilot.indices] += pilot.multiplicity
        multiplicity[second.indices] += second.multiplicity
        indices = np.flatnonzero(multiplicity)
        # mixture weights: draws per unit over the combined expected draws
        weight = multiplicity[indices] / (pilot_pi[indices] + design.pi[indices])
        combined = SampleDraw(indices=indices, multiplicity=multiplicity[indices], weight=weight)
        return self._fit(data, combined, guard.reveal(indices))

    def _stratified_oracle(self, data: Dataset, n: int, n1: int, rng: RngStream) -> StrategyOutcome:
        full = fit_weighted_mle(data, data.y)
        H = influence(data, data.y, full)
        strata = strata_for_rule(self.strata_rule, data.y, data, H, self.cuts)
        design = neyman_allocation(strata, within_stratum_sd(H, strata), n)
        sample = draw_stratified(design, rng)
        return self._fit(data, sample, data.y[sample.indices])

    def _stratified_pilot(self, data: Dataset, n: int, n1: int, rng: RngStream,
                          guard: OutcomeGuard) -> StrategyOutcome:
        design = adaptive_two_wave(data, n1, n, self.cuts, rng.substream(0), guard,
                                   self.strata_rule)
        sample = draw_second_wave(design, rng.substream(1))
        return self._fit(data, sample, guard.reveal(sample.indices))


def run_strategy(data: Dataset, strategy: StrategyId, n: int, n1: int, rng: RngStream,
                 **settings) -> StrategyOutcome:
    """Convenience wrapper around StrategyRunner.run"""
    return StrategyRunner(**settings).run(data, strategy, n, n1, rng)
