"""Built-in defaults, strategy descriptions and the config template for subopt"""

default_settings = {
    "seed": 20240611,
    "workers": 1,
    "log_level": "WARNING",
    "out": "results",
    "scenario": "zeroMeanNormal",
    "p": 3,
    "N": 10000,
    "n": "800,1200,1600",
    "n1": "200,600",
    "error": "low",
    "replicates": 100,
    "strategies": "1,2,3,4,5,6",
    "cuts": "0.2,0.8",
    "osmac_mechanism": "poisson",
}

# pilot-size sweep for an external cohort of about 1600 people
analyze_settings = {
    "n": "200",
    "n1": "75,100,125",
    "replicates": 500,
}

strategy_descriptions = {
    "CC_TRUE": "Case-control sampling on the true outcome (needs y for everyone)",
    "CC_SURROGATE": "Case-control sampling on the surrogate outcome",
    "OSMAC_ORACLE": "OSMAC Poisson sampling from full-data influence functions (needs y for everyone)",
    "OSSAT_PILOT": "Two-step surrogate-assisted sampling: case-control pilot, then OSSAT draws",
    "STRAT_ORACLE": "Neyman-allocated stratified sampling on full-data influence functions (needs y for everyone)",
    "STRAT_PILOT": "Adaptive two-wave stratified sampling driven by the surrogate and a pilot",
}

config_template = """\
# subopt configuration. Values here override the built-in defaults and
# SUBOPT_* environment variables; command-line flags override this file.

[simulate]
# zeroMeanNormal | rareEvent | unequalVar | mixNormal | T3 | Exp | DiscreteX
scenario = zeroMeanNormal
# covariate count, 3 or 7 (DiscreteX: 3 only)
p = 3
N = 10000
# budgets and pilot sizes, comma separated; cells with n1 >= n are skipped
n = 800,1200,1600
n1 = 200,600
# surrogate misclassification: low | high | none
error = low
# strategies by number (1-6) or name
strategies = 1,2,3,4,5,6
replicates = 100
seed = 20240611
# reuse one realized dataset for every replicate
fixed_x = false
# influence | covariates | exact (default: exact for DiscreteX, influence otherwise)
# strata = influence
cuts = 0.2,0.8
osmac_mechanism = poisson
workers = 1
out = results

[analyze]
# data = cohort.csv
n = 200
n1 = 75,100,125
strategies = 1,2,3,4,5,6
replicates = 500
seed = 20240611
# default for cohorts: covariates
# strata = covariates
workers = 1
out = results
"""
