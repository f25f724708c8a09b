"""Monte Carlo grid over budgets, pilot sizes, strategies and replicates"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from helper.errors import ConfigError, DesignError, EmptyCell, NumericalError
from helper.logistic import fit_weighted_mle
from helper.models import (
    Dataset, ExperimentConfig, ResultRow, Scenario, StrataRule, StrategyId
)
from helper.numerics import RngStream
from helper.simgen import gen_dataset, load_dataset_csv
from runners.strategy_runner import StrategyRunner

logger = logging.getLogger(__name__)

DATA_STREAM = 0
STRATEGY_STREAM = 1
COHORT_ERROR_LEVEL = "observed"
CELL_KEYS = ["scenario", "p", "error_level", "n", "n1", "strategy"]


def result_columns(p: int) -> List[str]:
    """Exact column order of the results table"""
    return (["scenario", "p", "error_level", "n", "n1", "strategy", "replicate",
             "realized_size", "converged"]
            + [f"beta_hat_{j}" for j in range(p + 1)] + ["sq_error"])


def default_strata_rule(config: ExperimentConfig) -> StrataRule:
    """Exact cells for discrete covariates, covariate quantiles for cohorts, influence otherwise"""
    if config.strata_rule is not None:
        return config.strata_rule
    if config.scenario is None:
        return StrataRule.COVARIATES
    if config.scenario.name == Scenario.DISCRETE_X:
        return StrataRule.EXACT
    return StrataRule.INFLUENCE


class GridContext:
    """Read-only state shared by every replicate"""

    def __init__(self, config: ExperimentConfig, cohort: Optional[Dataset] = None):
        self.config = config
        self.cohort = cohort
        if config.scenario is not None:
            self.label = config.scenario.name.value
            self.error_level = config.scenario.error_level.value
            self.beta_ref = config.scenario.beta
            self.fixed = gen_dataset(config.scenario, self.data_stream(0)) if config.fixed_x else None
        else:
            if cohort is None:
                if config.data_path is None:
                    raise ConfigError("Give a scenario or a data file")
                cohort = load_dataset_csv(config.data_path)
                self.cohort = cohort
            if cohort.y is None:
                raise ConfigError("Cohort analysis needs the true outcome column 'y'")
            self.label = config.label
            self.error_level = COHORT_ERROR_LEVEL
            reference = fit_weighted_mle(cohort, cohort.y)
            if not reference.converged:
                logger.warning("Full-cohort reference fit did not converge")
            self.beta_ref = reference.beta
            self.fixed = cohort
        self.runner = StrategyRunner(cuts=config.cuts, strata_rule=default_strata_rule(config),
                                     osmac_mechanism=config.osmac_mechanism)

    def data_stream(self, replicate: int) -> RngStream:
        return RngStream(self.config.base_seed, replicate).substream(DATA_STREAM)

    def dataset(self, replicate: int) -> Dataset:
        if self.fixed is not None:
            return self.fixed
        return gen_dataset(self.config.scenario, self.data_stream(replicate))

    @property
    def p(self) -> int:
        if self.config.scenario is not None:
            return self.config.scenario.p
        return self.cohort.p

    @property
    def population(self) -> int:
        if self.config.scenario is not None:
            return self.config.scenario.N
        return self.cohort.N


def _strategy_stream(config: ExperimentConfig, replicate: int, strategy: StrategyId,
                     n: int, n1: int) -> RngStream:
    return RngStream(config.base_seed, replicate).substream(STRATEGY_STREAM, strategy.number, n, n1)


def run_replicate(context: GridContext, replicate: int) -> List[ResultRow]:
    """Every (n, n1, strategy) cell of one replicate"""
    config = context.config
    data = context.dataset(replicate)
    rows = []
    oracle_cache: Dict[Tuple[StrategyId, int], Tuple] = {}

    for n, n1 in config.cells():
        for strategy in config.strategies:
            # oracle strategies ignore the pilot size, so run once per budget
            pilot = 0 if strategy.is_oracle else n1
            key = (strategy, n)
            if strategy.is_oracle and key in oracle_cache:
                beta_hat, size, converged = oracle_cache[key]
            else:
                rng = _strategy_stream(config, replicate, strategy, n, pilot)
                try:
                    outcome = context.runner.run(data, strategy, n, pilot, rng)
                    beta_hat, size, converged = outcome.beta_hat, outcome.realized_size, outcome.converged
                except (NumericalError, DesignError) as e:
                    logger.error(f"Replicate {replicate}, {strategy.value} (n={n}, n1={n1}) failed: {e}")
                    beta_hat, size, converged = np.full(data.p + 1, np.nan), 0, False
                if strategy.is_oracle:
                    oracle_cache[key] = (beta_hat, size, converged)

            sq_error = float(np.sum((beta_hat - context.beta_ref) ** 2))
            rows.append(ResultRow(
                scenario=context.label, p=data.p, error_level=context.error_level,
                n=n, n1=n1, strategy=strategy, replicate=replicate, realized_size=size,
                converged=bool(converged), beta_hat=beta_hat, sq_error=sq_error,
            ))
    return rows


_worker_context: Optional[GridContext] = None


def _init_worker(context: GridContext):
    global _worker_context
    _worker_context = context


def _run_in_worker(replicate: int) -> List[ResultRow]:
    return run_replicate(_worker_context, replicate)


def run_grid(config: ExperimentConfig, progress: Optional[Callable[[int], None]] = None,
             cohort: Optional[Dataset] = None) -> pd.DataFrame:
    """
    Run the full Monte Carlo grid.

    Replicate r draws its data and every strategy from streams keyed by
    (base_seed, r), so the table does not depend on the worker count.

    Args:
        config: Grid settings
        progress: Called with the replicate index as each one finishes
        cohort: Pre-loaded cohort, instead of reading config.data_path

    Returns:
        Results table sorted by replicate, in result_columns order
    """
    config.validate()
    context = GridContext(config, cohort)
    config.validate(N=context.population)
    replicates = range(config.replicates)
    logger.info(f"Running {config.replicates} replicates of {context.label} "
                f"over cells {config.cells()} with {config.workers} worker(s)")

    rows: List[ResultRow] = []
    if config.workers <= 1:
        for replicate in replicates:
            rows.extend(run_replicate(context, replicate))
            if progress:
                progress(replicate)
    else:
        with ProcessPoolExecutor(max_workers=config.workers, initializer=_init_worker,
                                 initargs=(context,)) as executor:
            for replicate, chunk in zip(replicates, executor.map(_run_in_worker, replicates)):
                rows.extend(chunk)
                if progress:
                    progress(replicate)

    rows.sort(key=lambda row: row.replicate)
    table = pd.DataFrame([row.to_record() for row in rows], columns=result_columns(context.p))
    failed = int((~table["converged"]).sum()) if len(table) else 0
    logger.info(f"Grid finished: {len(table)} rows, {failed} not converged")
    return table


def _variance_sum(betas: np.ndarray) -> float:
    """Trace of the sample covariance of the estimates; exactly 0 when they coincide"""
    if betas.shape[0] < 2:
        return float("nan")
    shifted = betas - betas[0]
    centered = shifted - shifted.mean(axis=0)
    return float(np.sum(centered ** 2) / (betas.shape[0] - 1))


def summarize_mse(results: pd.DataFrame) -> pd.DataFrame:
    """
    Empirical MSE per (scenario, p, error_level, n, n1, strategy) cell.

    Non-converged replicates are left out of mse and var_sum and counted
    in excluded.
    """
    if results is None or len(results) == 0:
        raise EmptyCell("No result rows to summarize")
    beta_columns = [c for c in results.columns if c.startswith("beta_hat_")]

    records = []
    for key, cell in results.groupby(CELL_KEYS, sort=False):
        kept = cell[cell["converged"].astype(bool)]
        if len(kept) == 0:
            logger.warning(f"Every replicate excluded in cell {dict(zip(CELL_KEYS, key))}")
        records.append({
            **dict(zip(CELL_KEYS, key)),
            "mse": float(kept["sq_error"].mean()) if len(kept) else float("nan"),
            "var_sum": _variance_sum(kept[beta_columns].to_numpy(dtype=float)),
            "replicates": int(len(cell)),
            "excluded": int(len(cell) - len(kept)),
            "mean_realized_size": float(kept["realized_size"].mean()) if len(kept) else float("nan"),
        })
    return pd.DataFrame.from_records(records)


def paired_sign_test(results: pd.DataFrame, better: StrategyId, worse: StrategyId,
                     n: Optional[int] = None, n1: Optional[int] = None) -> Dict[str, float]:
    """
    One-sided sign test that `better` has the smaller squared error more often.

    Pairs are matched by replicate (and budget cell); ties and replicates where
    either fit failed are dropped.
    """
    frame = results
    if n is not None:
        frame = frame[frame["n"] == n]
    if n1 is not None:
        frame = frame[frame["n1"] == n1]
    keys = ["n", "n1", "replicate"]
    a = frame[frame["strategy"] == better.value].set_index(keys)
    b = frame[frame["strategy"] == worse.value].set_index(keys)
    paired = a[["sq_error", "converged"]].join(b[["sq_error", "converged"]], lsuffix="_a",
                                               rsuffix="_b", how="inner")
    paired = paired[paired["converged_a"].astype(bool) & paired["converged_b"].astype(bool)]
    wins = int((paired["sq_error_a"] < paired["sq_error_b"]).sum())
    losses = int((paired["sq_error_a"] > paired["sq_error_b"]).sum())
    if wins + losses == 0:
        raise EmptyCell(f"No usable pairs for {better.value} vs {worse.value}")
    test = stats.binomtest(wins, wins + losses, 0.5, alternative="greater")
    return {"wins": wins, "losses": losses, "p_value": float(test.pvalue)}
