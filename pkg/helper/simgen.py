"""Simulated cohorts: covariate scenarios, outcomes, misclassified surrogates and CSV I/O"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from scipy import optimize, stats

from helper.errors import (
    DataError, EmptyInput, MissingOutcomeColumns, NonBinaryOutcome, ParseError
)
from helper.logistic import expit
from helper.models import Dataset, ErrorLevel, Scenario, ScenarioSpec, SurrogateSpec
from helper.numerics import RngStream, empirical_quantile

logger = logging.getLogger(__name__)

SURROGATE_QUANTILE = 0.3
DISCRETE_THRESHOLD = 0.5
RARE_EVENT_MEAN = -1.6
EXP_RATE = 2.0
T_DEGREES = 3
T_SCALE = 10.0

VCCC_SIZE = 1595
VCCC_PREVALENCE = 0.06


def exchangeable_covariance(p: int) -> np.ndarray:
    """Sigma_ij = 0.5^{I(i != j)}"""
    return np.full((p, p), 0.5) + 0.5 * np.eye(p)


def unequal_covariance(p: int) -> np.ndarray:
    """Sigma*_ij = 0.5^{I(i != j)} / (i j), so Var(X_i) = 1 / i^2"""
    scale = 1.0 / np.arange(1, p + 1)
    return exchangeable_covariance(p) * np.outer(scale, scale)


def gen_covariates(spec: ScenarioSpec, rng: RngStream) -> np.ndarray:
    """
    Draw the N x p covariates for a scenario and prepend the intercept column.

    Args:
        spec: Scenario settings
        rng: Stream for the draw

    Returns:
        N x (p+1) design matrix
    """
    generator = rng.generator()
    N, p = spec.N, spec.p
    sigma = exchangeable_covariance(p)
    zeros = np.zeros(p)

    if spec.name == Scenario.ZERO_MEAN_NORMAL:
        Z = generator.multivariate_normal(zeros, sigma, size=N, method="cholesky")
    elif spec.name == Scenario.RARE_EVENT:
        Z = generator.multivariate_normal(np.full(p, RARE_EVENT_MEAN), sigma, size=N,
                                          method="cholesky")
    elif spec.name == Scenario.UNEQUAL_VAR:
        Z = generator.multivariate_normal(zeros, unequal_covariance(p), size=N,
                                          method="cholesky")
    elif spec.name == Scenario.MIX_NORMAL:
        signs = np.where(generator.random(N) < 0.5, 1.0, -1.0)
        Z = generator.multivariate_normal(zeros, sigma, size=N, method="cholesky")
        Z += signs[:, None]
    elif spec.name == Scenario.T3:
        Z = generator.multivariate_normal(zeros, sigma, size=N, method="cholesky")
        chi2 = generator.chisquare(T_DEGREES, size=N)
        Z = Z / np.sqrt(chi2 / T_DEGREES)[:, None] / T_SCALE
    elif spec.name == Scenario.EXP:
        Z = stats.expon.ppf(generator.random((N, p)), scale=1.0 / EXP_RATE)
    elif spec.name == Scenario.DISCRETE_X:
        Z = (generator.random((N, p)) < 0.5).astype(float)
    else:
        raise ValueError(f"Unknown scenario: {spec.name}")

    return np.column_stack([np.ones(N), Z])


def gen_outcome(X: np.ndarray, beta: np.ndarray, rng: RngStream) -> np.ndarray:
    """Independent Bernoulli(expit(x_i' beta))"""
    p = expit(X @ np.asarray(beta, dtype=float))
    return (rng.generator().random(X.shape[0]) < p).astype(np.int64)


def surrogate_spec_for(spec: ScenarioSpec, X: np.ndarray) -> SurrogateSpec:
    """Misclassification rates for the scenario, thresholded on the realized X_1"""
    if spec.name == Scenario.DISCRETE_X:
        threshold = DISCRETE_THRESHOLD
    else:
        threshold = empirical_quantile(X[:, 1], SURROGATE_QUANTILE)
    return SurrogateSpec.for_level(spec.error_level, threshold)


def gen_surrogate(y: np.ndarray, X: np.ndarray, spec: SurrogateSpec,
                  rng: RngStream) -> np.ndarray:
    """Keep a case with the regional sensitivity and a control with the regional specificity"""
    below = X[:, spec.threshold_variable] < spec.threshold
    sensitivity = np.where(below, spec.sens_below, spec.sens_above)
    specificity = np.where(below, spec.spec_below, spec.spec_above)
    u = rng.generator().random(X.shape[0])
    s = np.where(np.asarray(y) == 1, u < sensitivity, u >= specificity)
    return s.astype(np.int64)


def gen_dataset(spec: ScenarioSpec, rng: RngStream) -> Dataset:
    """Covariates, outcome and surrogate from independent substreams"""
    X = gen_covariates(spec, rng.substream(0))
    y = gen_outcome(X, spec.beta, rng.substream(1))
    s = gen_surrogate(y, X, surrogate_spec_for(spec, X), rng.substream(2))
    return Dataset(X=X, y=y, s=s)


def gen_vccc_like(rng: RngStream) -> Dataset:
    """
    Synthetic stand-in for an HIV cohort with an error-prone outcome.

    Age-like and CD4-like covariates; outcome prevalence near 6%; the
    surrogate has sensitivity 0.72 below the 0.3 quantile of CD4 and 0.90
    above, with specificity 0.90 throughout.
    """
    generator = rng.substream(0).generator()
    age = generator.normal(40.0, 9.0, size=VCCC_SIZE)
    cd4 = generator.gamma(shape=2.5, scale=120.0, size=VCCC_SIZE)
    X = np.column_stack([np.ones(VCCC_SIZE), age, cd4])

    slopes = np.array([0.03, -0.004])
    linear = X[:, 1:] @ slopes
    intercept = optimize.brentq(
        lambda b0: expit(b0 + linear).mean() - VCCC_PREVALENCE, -30.0, 30.0
    )
    beta = np.concatenate([[intercept], slopes])
    y = gen_outcome(X, beta, rng.substream(1))

    threshold = empirical_quantile(cd4, SURROGATE_QUANTILE)
    spec = SurrogateSpec(sens_below=0.72, sens_above=0.90, spec_below=0.90, spec_above=0.90,
                         threshold_variable=2, threshold=threshold)
    s = gen_surrogate(y, X, spec, rng.substream(2))
    return Dataset(X=X, y=y, s=s, columns=("age", "cd4"))


def _check_outcome_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    values = frame[name]
    numeric = pd.to_numeric(values, errors="coerce")
    bad = numeric.isna() | ~numeric.isin([0, 1])
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise NonBinaryOutcome(
            f"Outcome '{name}' must be 0/1 but holds '{values.iloc[row]}' "
            f"(line {row + 2}, column '{name}')"
        )
    return numeric.to_numpy().astype(np.int64)


def load_dataset_csv(path: Union[str, Path]) -> Dataset:
    """
    Read a cohort from CSV.

    A header row is required; y and/or s hold the outcomes and every other
    column becomes a covariate in header order.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Data file not found: {path}")
    raw = path.read_bytes()
    try:
        raw.decode("utf-8")
    except UnicodeDecodeError as e:
        line = raw.count(b"\n", 0, e.start) + 1
        raise ParseError(f"Byte 0x{raw[e.start]:02x} in {path} is not valid UTF-8", line=line)
    try:
        frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise EmptyInput(f"{path} is empty")
    except pd.errors.ParserError as e:
        raise ParseError(f"Malformed CSV {path}: {e}")
    if frame.empty:
        raise EmptyInput(f"{path} has a header but no rows")

    outcomes = [name for name in ("y", "s") if name in frame.columns]
    if not outcomes:
        raise MissingOutcomeColumns(f"{path} needs a 'y' or 's' column")
    y = _check_outcome_column(frame, "y") if "y" in frame.columns else None
    s = _check_outcome_column(frame, "s") if "s" in frame.columns else None

    covariates = [name for name in frame.columns if name not in ("y", "s")]
    for name in covariates:
        column = frame[name]
        numeric = pd.to_numeric(column, errors="coerce")
        bad = numeric.isna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(f"Non-numeric value '{column.iloc[row]}'", line=row + 2, column=name)
        frame[name] = numeric

    X = np.column_stack([np.ones(len(frame))] + [frame[name].to_numpy(dtype=float)
                                                 for name in covariates])
    logger.info(f"Loaded {len(frame)} rows with covariates {covariates} from {path}")
    return Dataset(X=X, y=y, s=s, columns=tuple(covariates))


def save_dataset_csv(data: Dataset, path: Union[str, Path]) -> Path:
    """Write a cohort in the dialect load_dataset_csv reads"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame()
    if data.y is not None:
        frame["y"] = data.y
    if data.s is not None:
        frame["s"] = data.s
    for j, name in enumerate(data.columns, start=1):
        frame[name] = data.X[:, j]
    frame.to_csv(path, index=False)
    return path
