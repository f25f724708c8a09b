"""Data models for the subsampling designs and experiment harness"""

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Dict, Optional, Tuple, Any
from enum import Enum

import numpy as np
from scipy.special import expit

from helper.errors import (
    ConfigError, DataError, DesignError, EmptyInput, NonBinaryOutcome, OutcomeAccessViolation
)


class Mechanism(Enum):
    """How a design turns into a random sample"""
    POISSON = "poisson"                    # independent Bernoulli(pi_i)
    WITH_REPLACEMENT = "with-replacement"  # n categorical draws
    SRS_WITHIN_STRATA = "srs-within-strata"


class Scenario(Enum):
    """Covariate-generating scenarios"""
    ZERO_MEAN_NORMAL = "zeroMeanNormal"
    RARE_EVENT = "rareEvent"
    UNEQUAL_VAR = "unequalVar"
    MIX_NORMAL = "mixNormal"
    T3 = "T3"
    EXP = "Exp"
    DISCRETE_X = "DiscreteX"


class ErrorLevel(Enum):
    """Degree of differential misclassification of the surrogate"""
    LOW = "low"
    HIGH = "high"
    NONE = "none"


class StrataRule(Enum):
    """What the stratified strategies bin on"""
    INFLUENCE = "influence"    # 0.2/0.8 quantiles of influence columns for beta_1..beta_3
    COVARIATES = "covariates"  # 0.2/0.8 quantiles of the covariates
    EXACT = "exact"            # exact (X, outcome) cells


class StrategyId(Enum):
    """The six subsampling strategies"""
    CC_TRUE = "CC_TRUE"            # 1: case-control on y
    CC_SURROGATE = "CC_SURROGATE"  # 2: case-control on s
    OSMAC_ORACLE = "OSMAC_ORACLE"  # 3: OSMAC with full-data y
    OSSAT_PILOT = "OSSAT_PILOT"    # 4: two-step surrogate-assisted
    STRAT_ORACLE = "STRAT_ORACLE"  # 5: Neyman stratified with full-data y
    STRAT_PILOT = "STRAT_PILOT"    # 6: adaptive two-wave stratified

    @property
    def number(self) -> int:
        return list(StrategyId).index(self) + 1

    @property
    def is_oracle(self) -> bool:
        """Oracle strategies read y for all N units"""
        return self in (StrategyId.CC_TRUE, StrategyId.OSMAC_ORACLE, StrategyId.STRAT_ORACLE)

    @property
    def uses_pilot(self) -> bool:
        return self in (StrategyId.OSSAT_PILOT, StrategyId.STRAT_PILOT)

    @classmethod
    def parse(cls, text: str) -> "StrategyId":
        """Accept names (CC_TRUE), numbers (1) or lower-case names"""
        text = text.strip()
        if text.isdigit():
            index = int(text) - 1
            members = list(cls)
            if 0 <= index < len(members):
                return members[index]
        try:
            return cls[text.upper()]
        except KeyError:
            raise ConfigError(f"Unknown strategy: {text}")


def _check_binary(values: np.ndarray, name: str):
    bad = np.flatnonzero((values != 0) & (values != 1))
    if bad.size:
        raise NonBinaryOutcome(
            f"Outcome '{name}' must be 0/1; row {bad[0] + 1} holds {values[bad[0]]}"
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariates with intercept column, true outcome y and surrogate s"""
    X: np.ndarray
    y: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    columns: Tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DataError("Covariate matrix must be two-dimensional")
        if not np.all(X[:, 0] == 1.0):
            raise DataError("First covariate column must be the intercept (all ones)")
        if not np.all(np.isfinite(X)):
            raise DataError("Covariate matrix holds non-finite entries")
        N, d = X.shape
        if N == 0:
            raise EmptyInput("Dataset has no units")
        object.__setattr__(self, "X", X)
        for name in ("y", "s"):
            values = getattr(self, name)
            if values is None:
                continue
            values = np.asarray(values)
            if values.shape != (N,):
                raise DataError(f"Outcome '{name}' must have length {N}")
            _check_binary(values, name)
            object.__setattr__(self, name, values.astype(np.int64))
        if not self.columns:
            object.__setattr__(self, "columns", tuple(f"x{j}" for j in range(1, d)))

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        """Covariate count, intercept excluded"""
        return self.X.shape[1] - 1

    def without_outcome(self) -> "Dataset":
        """Copy with y removed, for strategies that may only see s"""
        return Dataset(X=self.X, y=None, s=self.s, columns=self.columns)

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            X=self.X[indices],
            y=None if self.y is None else self.y[indices],
            s=None if self.s is None else self.s[indices],
            columns=self.columns,
        )


class OutcomeGuard:
    """Releases the true outcome only for units a strategy has sampled"""

    def __init__(self, y: np.ndarray):
        self._y = np.asarray(y, dtype=np.int64)
        self._revealed = np.zeros(self._y.shape[0], dtype=bool)

    @property
    def N(self) -> int:
        return self._y.shape[0]

    def reveal(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= self.N):
            raise OutcomeAccessViolation("Requested outcome for a unit outside the cohort")
        self._revealed[indices] = True
        return self._y[indices].copy()

    @property
    def revealed(self) -> np.ndarray:
        """Sorted indices whose outcome has been released"""
        return np.flatnonzero(self._revealed)

    def __array__(self, *args, **kwargs):
        raise OutcomeAccessViolation("The full outcome vector is not observable here")


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Logistic fit: coefficients and the information-style matrix M_x"""
    beta: np.ndarray
    m_x: np.ndarray
    converged: bool
    iterations: int
    final_score_norm: float
    log_likelihood: float = float("nan")

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        return expit(X @ self.beta)


@dataclass(frozen=True, eq=False)
class InfluenceMatrix:
    """Per-unit influence functions h_i as rows, with their Euclidean norms"""
    H: np.ndarray
    norms: np.ndarray

    @property
    def N(self) -> int:
        return self.H.shape[0]

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @classmethod
    def from_rows(cls, H: np.ndarray) -> "InfluenceMatrix":
        H = np.atleast_2d(np.asarray(H, dtype=float))
        return cls(H=H, norms=np.linalg.norm(H, axis=1))


@dataclass(frozen=True, eq=False)
class IndividualizedDesign:
    """Unit-level expected-draw intensities summing to the budget"""
    pi: np.ndarray
    mechanism: Mechanism = Mechanism.POISSON

    @property
    def N(self) -> int:
        return self.pi.shape[0]

    @property
    def n(self) -> float:
        return float(self.pi.sum())


@dataclass(frozen=True, eq=False)
class StrataAssignment:
    """Partition of the cohort into K non-empty strata"""
    stratum_of: np.ndarray
    counts: np.ndarray
    labels: List[Tuple[Any, ...]] = field(default_factory=list)

    @property
    def K(self) -> int:
        return int(self.counts.shape[0])

    @property
    def N(self) -> int:
        return int(self.stratum_of.shape[0])

    @cached_property
    def _groups(self) -> List[np.ndarray]:
        order = np.argsort(self.stratum_of, kind="stable")
        return np.split(order, np.cumsum(self.counts)[:-1])

    def members(self, k: int) -> np.ndarray:
        """Unit indices of stratum k, ascending"""
        return self._groups[k]


@dataclass(frozen=True, eq=False)
class StratifiedDesign:
    """Stratified SRS design: strata plus per-stratum sample sizes"""
    strata: StrataAssignment
    allocation: np.ndarray
    targets: Optional[np.ndarray] = None  # real-valued allocation before integerization
    mechanism: Mechanism = Mechanism.SRS_WITHIN_STRATA

    def __post_init__(self):
        allocation = np.asarray(self.allocation, dtype=np.int64)
        if allocation.shape != (self.strata.K,):
            raise DesignError("Allocation length must equal the stratum count")
        if np.any(allocation < 1) or np.any(allocation > self.strata.counts):
            raise DesignError("Every stratum needs 1 <= n_k <= N_k")
        object.__setattr__(self, "allocation", allocation)

    @property
    def n(self) -> int:
        return int(self.allocation.sum())

    def inclusion_probabilities(self) -> np.ndarray:
        """pi_i = n_k / N_k for every unit"""
        rates = self.allocation / self.strata.counts
        return rates[self.strata.stratum_of]


@dataclass(frozen=True, eq=False)
class SampleDraw:
    """Selected units with multiplicities and estimation weights"""
    indices: np.ndarray
    multiplicity: np.ndarray
    weight: np.ndarray

    @property
    def realized_size(self) -> int:
        return int(self.multiplicity.sum())

    def inclusion_mask(self, N: int) -> np.ndarray:
        mask = np.zeros(N, dtype=bool)
        mask[self.indices] = True
        return mask


@dataclass(frozen=True, eq=False)
class TwoWaveDesign:
    """Pilot wave plus an adaptively allocated second wave"""
    wave1: StratifiedDesign
    wave1_draw: SampleDraw
    wave2_allocation: np.ndarray
    pilot_sd: np.ndarray

    @property
    def strata(self) -> StrataAssignment:
        return self.wave1.strata

    @property
    def combined_allocation(self) -> np.ndarray:
        return self.wave1.allocation + self.wave2_allocation

    @property
    def n(self) -> int:
        return int(self.combined_allocation.sum())

    def combined_weights(self) -> np.ndarray:
        """Per-stratum estimation weight N_k / (n_k1 + n_k2)"""
        return self.strata.counts / self.combined_allocation


@dataclass(frozen=True, eq=False)
class VarianceReport:
    """Design variance matrix of the subsample estimator given (y, X)"""
    matrix: np.ndarray
    design_tag: str
    trace: float = field(init=False)

    def __post_init__(self):
        matrix = 0.5 * (self.matrix + self.matrix.T)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "trace", float(np.trace(matrix)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "design": self.design_tag,
            "trace": self.trace,
            "matrix": self.matrix.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """One simulated data-generating setting"""
    name: Scenario
    p: int
    N: int
    beta: np.ndarray
    error_level: ErrorLevel = ErrorLevel.LOW

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != (self.p + 1,):
            raise ConfigError(f"beta must have length p+1 = {self.p + 1}")
        if self.name == Scenario.DISCRETE_X and self.p != 3:
            raise ConfigError("DiscreteX is defined for p = 3 only")
        if self.N < self.p + 2:
            raise ConfigError("Population too small for the covariate count")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def default(cls, name: Scenario, p: int = 3, N: int = 10_000,
                error_level: ErrorLevel = ErrorLevel.LOW) -> "ScenarioSpec":
        """All coefficients 0.5, except beta_0 = -0.5 for Exp"""
        beta = np.full(p + 1, 0.5)
        if name == Scenario.EXP:
            beta[0] = -0.5
        return cls(name=name, p=p, N=N, beta=beta, error_level=error_level)


@dataclass(frozen=True)
class SurrogateSpec:
    """Region-dependent sensitivity and specificity of the surrogate"""
    sens_below: float
    sens_above: float
    spec_below: float
    spec_above: float
    threshold_variable: int = 1  # column of X (0 is the intercept)
    threshold: float = 0.0

    def __post_init__(self):
        for name in ("sens_below", "sens_above", "spec_below", "spec_above"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")

    @classmethod
    def for_level(cls, level: ErrorLevel, threshold: float,
                  threshold_variable: int = 1) -> "SurrogateSpec":
        """Misclassification rates for the low and high error settings"""
        if level == ErrorLevel.LOW:
            rates = dict(sens_below=0.99, sens_above=0.95, spec_below=0.90, spec_above=0.80)
        elif level == ErrorLevel.HIGH:
            rates = dict(sens_below=0.95, sens_above=0.90, spec_below=0.70, spec_above=0.60)
        else:
            rates = dict(sens_below=1.0, sens_above=1.0, spec_below=1.0, spec_above=1.0)
        return cls(threshold_variable=threshold_variable, threshold=threshold, **rates)


@dataclass
class ExperimentConfig:
    """Monte Carlo grid: budgets x pilot sizes x strategies x replicates"""
    scenario: Optional[ScenarioSpec]
    budgets: Tuple[int, ...]
    pilot_sizes: Tuple[int, ...]
    strategies: Tuple[StrategyId, ...] = tuple(StrategyId)
    replicates: int = 1
    base_seed: int = 0
    fixed_x: bool = False
    output_dir: Path = Path("results")
    data_path: Optional[Path] = None
    cuts: Tuple[float, float] = (0.2, 0.8)
    strata_rule: Optional[StrataRule] = None
    workers: int = 1
    osmac_mechanism: Mechanism = Mechanism.POISSON

    def validate(self, N: Optional[int] = None):
        """Check the settings, and the budgets against the cohort size N when known"""
        if self.scenario is not None and self.data_path is not None:
            raise ConfigError("Give a scenario or a data file, not both")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not 0 <= self.base_seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not self.budgets or not self.pilot_sizes:
            raise ConfigError("Need at least one budget and one pilot size")
        if not self.strategies:
            raise ConfigError("Need at least one strategy")
        if not 0.0 < self.cuts[0] < self.cuts[1] < 1.0:
            raise ConfigError("cuts must be strictly increasing inside (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if N is None and self.scenario is not None:
            N = self.scenario.N
        if N is not None:
            for n in self.budgets:
                if n > N:
                    raise ConfigError(f"Budget {n} exceeds population size {N}")
        if any(n1 < 1 for n1 in self.pilot_sizes) or any(n < 2 for n in self.budgets):
            raise ConfigError("Budgets must be >= 2 and pilot sizes >= 1")
        if not self.cells():
            raise ConfigError("No (n, n1) pair satisfies n1 < n")

    def cells(self) -> List[Tuple[int, int]]:
        """Every (n, n1) combination with n1 < n"""
        return [(n, n1) for n in self.budgets for n1 in self.pilot_sizes if n1 < n]

    @property
    def label(self) -> str:
        if self.scenario is not None:
            return self.scenario.name.value
        if self.data_path is not None:
            return Path(self.data_path).stem
        return "cohort"


@dataclass
class StrategyOutcome:
    """What one strategy run yields"""
    beta_hat: np.ndarray
    realized_size: int
    converged: bool


@dataclass
class ResultRow:
    """One (replicate, strategy, budget) estimate"""
    scenario: str
    p: int
    error_level: str
    n: int
    n1: int
    strategy: StrategyId
    replicate: int
    realized_size: int
    converged: bool
    beta_hat: np.ndarray
    sq_error: float

    def to_record(self) -> Dict[str, Any]:
        record = {
            "scenario": self.scenario,
            "p": self.p,
            "error_level": self.error_level,
            "n": self.n,
            "n1": self.n1,
            "strategy": self.strategy.value,
            "replicate": self.replicate,
            "realized_size": self.realized_size,
            "converged": self.converged,
        }
        for j, value in enumerate(self.beta_hat):
            record[f"beta_hat_{j}"] = float(value)
        record["sq_error"] = self.sq_error
        return record
