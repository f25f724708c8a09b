#!/usr/bin/env python3
"""Command-line interface for the subsampling design toolkit"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from colorama import init, Fore, Style
from dotenv import load_dotenv
from tqdm import tqdm

# Initialize colorama for cross-platform colored output
init()

from defaults import analyze_settings, config_template, default_settings, strategy_descriptions
from designs.individualized import osmac
from designs.stratified import adaptive_two_wave, neyman_allocation, strata_for_rule, within_stratum_sd
from designs.variance import (
    brute_force_design_variance, poisson_variance, stratified_variance, with_replacement_variance
)
from helper.errors import ConfigError, MissingOutcomeColumns, NumericalError, SuboptError
from helper.logistic import fit_weighted_mle, influence
from helper.models import (
    ErrorLevel, ExperimentConfig, IndividualizedDesign, Mechanism, Scenario, ScenarioSpec,
    StrataRule, StrategyId,
)
from helper.numerics import RngStream
from helper.plots import emit_plots
from helper.simgen import gen_dataset, gen_vccc_like, load_dataset_csv, save_dataset_csv
from helper.utils import (
    ResultStorage, env_setting, format_duration, load_design_csv, load_ini_config,
    parse_int_list, save_design_csv,
)
from runners.experiment_grid import run_grid, summarize_mse

logger = logging.getLogger("subopt")

ENV_KEYS = ("seed", "workers", "log_level", "out")


def _flag(value: str) -> bool:
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _cuts(value: str):
    parts = [float(v) for v in str(value).replace(",", " ").split()]
    if len(parts) != 2:
        raise ConfigError(f"cuts needs two fractions, got '{value}'")
    return tuple(parts)


def _enum(enum_cls, value: str, what: str):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(member.value for member in enum_cls)
        raise ConfigError(f"Unknown {what} '{value}' (choose from {choices})")


class SuboptCLI:
    """Resolves layered settings and runs one sub-command"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.command = args.command

    def settings(self, section_defaults: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Built-in defaults < SUBOPT_* environment < INI section < command-line flags"""
        merged = dict(default_settings)
        merged.update(section_defaults or {})
        for key in ENV_KEYS:
            value = env_setting(key)
            if value is not None:
                merged[key] = value
        merged.update(load_ini_config(getattr(self.args, "config", None), self.command))
        for key, value in vars(self.args).items():
            if value is not None and key not in ("command", "config", "handler"):
                merged[key] = value
        return merged

    def print_status(self, message: str):
        print(f"{Fore.GREEN}{message}{Style.RESET_ALL}")

    def print_warning(self, message: str):
        print(f"{Fore.YELLOW}{message}{Style.RESET_ALL}")

    def _rng(self, settings: Dict[str, Any]) -> RngStream:
        try:
            return RngStream(int(settings["seed"]))
        except ValueError as e:
            raise ConfigError(f"Invalid seed: {e}")

    def _strategies(self, value) -> List[StrategyId]:
        if isinstance(value, (list, tuple)):
            return [StrategyId.parse(str(v)) for v in value]
        return [StrategyId.parse(part) for part in str(value).replace(",", " ").split()]

    def _experiment(self, settings: Dict[str, Any], scenario: Optional[ScenarioSpec],
                    data_path: Optional[Path]) -> ExperimentConfig:
        strata = settings.get("strata")
        try:
            return ExperimentConfig(
                scenario=scenario,
                budgets=tuple(parse_int_list(settings["n"])),
                pilot_sizes=tuple(parse_int_list(settings["n1"])),
                strategies=tuple(self._strategies(settings["strategies"])),
                replicates=int(settings["replicates"]),
                base_seed=int(settings["seed"]),
                fixed_x=_flag(settings.get("fixed_x", False)),
                output_dir=Path(settings["out"]),
                data_path=data_path,
                cuts=_cuts(settings["cuts"]),
                strata_rule=_enum(StrataRule, strata, "strata rule") if strata else None,
                workers=int(settings["workers"]),
                osmac_mechanism=_enum(Mechanism, settings["osmac_mechanism"], "OSMAC mechanism"),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid setting: {e}")

    def _run_experiment(self, config: ExperimentConfig) -> int:
        config.validate()
        started = time.time()
        with tqdm(total=config.replicates, desc="replicates", unit="rep",
                  disable=not sys.stderr.isatty()) as bar:
            results = run_grid(config, progress=lambda _: bar.update(1))

        storage = ResultStorage(config.output_dir)
        results_path = storage.save_results(results)
        summary = summarize_mse(results)
        charts = emit_plots(summary, config.output_dir)
        storage.save_metadata({k: v for k, v in vars(self.args).items() if k != "handler"},
                              time.time() - started)

        self.print_status(f"Wrote {results_path} and {len(charts)} chart(s) "
                          f"in {format_duration(time.time() - started)}")
        excluded = int(summary["excluded"].sum())
        if excluded:
            self.print_warning(f"{excluded} replicate fit(s) did not converge and were excluded")
        if not results["converged"].any():
            raise NumericalError("Every replicate failed")
        return 0

    def simulate(self) -> int:
        settings = self.settings()
        try:
            scenario = ScenarioSpec.default(
                _enum(Scenario, settings["scenario"], "scenario"),
                p=int(settings["p"]),
                N=int(settings["N"]),
                error_level=_enum(ErrorLevel, settings["error"], "error level"),
            )
        except ValueError as e:
            raise ConfigError(f"Invalid setting: {e}")
        return self._run_experiment(self._experiment(settings, scenario, None))

    def analyze(self) -> int:
        settings = self.settings(analyze_settings)
        if not settings.get("data"):
            raise ConfigError("analyze needs --data")
        return self._run_experiment(self._experiment(settings, None, Path(settings["data"])))

    def generate(self) -> int:
        settings = self.settings()
        rng = self._rng(settings)
        if self.args.vccc_like:
            data = gen_vccc_like(rng)
        else:
            spec = ScenarioSpec.default(
                _enum(Scenario, settings["scenario"], "scenario"), p=int(settings["p"]),
                N=int(settings["N"]), error_level=_enum(ErrorLevel, settings["error"], "error level"),
            )
            data = gen_dataset(spec, rng)
        path = save_dataset_csv(data, self.args.output)
        self.print_status(f"Wrote {data.N} rows to {path}")
        return 0

    def design(self) -> int:
        settings = self.settings()
        data = load_dataset_csv(self.args.data)
        method = self.args.method
        n = int(self.args.budget)
        rng = self._rng(settings)
        cuts = _cuts(settings["cuts"])
        rule = _enum(StrataRule, settings.get("strata") or "influence", "strata rule")

        if method == "two-wave":
            if self.args.pilot is None:
                raise ConfigError("two-wave needs --n1")
            design = adaptive_two_wave(data, int(self.args.pilot), n, cuts, rng, rule=rule)
        else:
            if data.y is None:
                raise MissingOutcomeColumns(f"{method} needs the true outcome 'y'")
            model = fit_weighted_mle(data, data.y, strict=True)
            H = influence(data, data.y, model)
            if method == "osmac":
                design = osmac(H.norms, n, _enum(Mechanism, settings["osmac_mechanism"], "mechanism"))
            else:
                strata = strata_for_rule(rule, data.y, data, H, cuts)
                design = neyman_allocation(strata, within_stratum_sd(H, strata), n)

        path = save_design_csv(design, self.args.output)
        self.print_status(f"Wrote {method} design for {data.N} units to {path}")
        return 0

    def variance(self) -> int:
        data = load_dataset_csv(self.args.data)
        if data.y is None:
            raise MissingOutcomeColumns("Design variances need the true outcome 'y'")
        mechanism = _enum(Mechanism, self.args.mechanism or "poisson", "mechanism")
        design = load_design_csv(self.args.design, mechanism)
        H = influence(data, data.y, fit_weighted_mle(data, data.y, strict=True))

        if isinstance(design, IndividualizedDesign):
            if design.N != data.N:
                raise ConfigError("Design and data cover different numbers of units")
            if mechanism == Mechanism.WITH_REPLACEMENT:
                report = with_replacement_variance(H, design.pi, int(round(design.n)))
            else:
                report = poisson_variance(H, design.pi)
        else:
            if design.strata.N != data.N:
                raise ConfigError("Design and data cover different numbers of units")
            report = stratified_variance(H, design)

        output = report.to_dict()
        if self.args.exact:
            output["exact"] = brute_force_design_variance(H, design).to_dict()
        print(json.dumps(output, indent=2))
        return 0

    def config_template(self) -> int:
        print(config_template, end="")
        return 0

    def strategies(self) -> int:
        for strategy in StrategyId:
            marker = f"{Fore.YELLOW}[oracle]{Style.RESET_ALL} " if strategy.is_oracle else ""
            print(f"  {Fore.GREEN}{strategy.number}{Style.RESET_ALL} {strategy.value:13s} "
                  f"{marker}{strategy_descriptions[strategy.value]}")
        return 0

    def run(self) -> int:
        handler = getattr(self, self.command.replace("-", "_"))
        return handler()


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=str, help="INI file with a section per command")
    parser.add_argument("--seed", type=int, help="Base seed (or SUBOPT_SEED)")
    parser.add_argument("--log-level", dest="log_level", type=str,
                        help="DEBUG, INFO, WARNING or ERROR (or SUBOPT_LOG_LEVEL)")


def _add_grid(parser: argparse.ArgumentParser):
    parser.add_argument("--n", type=str, help="Budgets, comma separated")
    parser.add_argument("--n1", type=str, help="Pilot sizes, comma separated")
    parser.add_argument("--strategies", type=str, help="Strategy numbers or names, comma separated")
    parser.add_argument("--replicates", type=int, help="Monte Carlo replicates")
    parser.add_argument("--out", type=str, help="Output directory (or SUBOPT_OUT)")
    parser.add_argument("--workers", type=int, help="Worker processes (or SUBOPT_WORKERS)")
    parser.add_argument("--strata", type=str, choices=[r.value for r in StrataRule],
                        help="What the stratified strategies bin on")
    parser.add_argument("--cuts", type=str, help="Quantile cuts for the strata (default 0.2,0.8)")
    parser.add_argument("--osmac-mechanism", dest="osmac_mechanism", type=str,
                        choices=[Mechanism.POISSON.value, Mechanism.WITH_REPLACEMENT.value],
                        help="How strategy 3 draws its sample (default poisson)")


def _add_scenario(parser: argparse.ArgumentParser):
    parser.add_argument("--scenario", type=str, choices=[s.value for s in Scenario],
                        help="Covariate scenario")
    parser.add_argument("--p", type=int, choices=[3, 7], help="Covariate count")
    parser.add_argument("--N", type=int, help="Population size")
    parser.add_argument("--error", type=str, choices=[e.value for e in ErrorLevel],
                        help="Surrogate misclassification level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subopt",
        description="Optimal subsampling designs for logistic regression",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  subopt simulate --scenario zeroMeanNormal --p 3 --n 800,1200,1600 --n1 200,600 --replicates 100
  subopt simulate --scenario DiscreteX --fixed-x --strategies 5 --replicates 100 --out fig3
  subopt generate --vccc-like --output cohort.csv
  subopt analyze --data cohort.csv --n 200 --n1 75,100,125 --replicates 500
  subopt design --data cohort.csv --method neyman --n 200 --output design.csv
  subopt variance --data cohort.csv --design design.csv
  subopt config-template > subopt.ini
        """
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Monte Carlo comparison on a simulated scenario")
    _add_common(simulate)
    _add_scenario(simulate)
    _add_grid(simulate)
    simulate.add_argument("--fixed-x", dest="fixed_x", action="store_true", default=None,
                          help="Reuse one realized dataset in every replicate")

    analyze = commands.add_parser("analyze", help="Monte Carlo comparison on a cohort CSV")
    _add_common(analyze)
    _add_grid(analyze)
    analyze.add_argument("--data", type=str, help="Cohort CSV with y, s and covariates")

    generate = commands.add_parser("generate", help="Write a simulated cohort to CSV")
    _add_common(generate)
    _add_scenario(generate)
    generate.add_argument("--vccc-like", dest="vccc_like", action="store_true",
                          help="HIV-cohort-like stand-in (N=1595, two covariates)")
    generate.add_argument("--output", type=str, required=True, help="CSV path")

    design = commands.add_parser("design", help="Build a design for a cohort and write it as CSV")
    _add_common(design)
    design.add_argument("--data", type=str, required=True, help="Cohort CSV")
    design.add_argument("--method", type=str, required=True,
                        choices=["osmac", "neyman", "two-wave"])
    design.add_argument("--n", dest="budget", type=int, required=True, help="Budget")
    design.add_argument("--n1", dest="pilot", type=int, help="Pilot size (two-wave)")
    design.add_argument("--strata", type=str, choices=[r.value for r in StrataRule])
    design.add_argument("--cuts", type=str)
    design.add_argument("--osmac-mechanism", dest="osmac_mechanism", type=str,
                        choices=[Mechanism.POISSON.value, Mechanism.WITH_REPLACEMENT.value])
    design.add_argument("--output", type=str, required=True, help="Design CSV path")

    variance = commands.add_parser("variance", help="Design variance of a saved design")
    _add_common(variance)
    variance.add_argument("--data", type=str, required=True, help="Cohort CSV with y")
    variance.add_argument("--design", type=str, required=True, help="Design CSV")
    variance.add_argument("--mechanism", type=str,
                          choices=[Mechanism.POISSON.value, Mechanism.WITH_REPLACEMENT.value],
                          help="Mechanism of an individualized design (default poisson)")
    variance.add_argument("--exact", action="store_true",
                          help="Also report the exact (enumerated) variance")

    template = commands.add_parser("config-template", help="Print a commented INI template")
    template.add_argument("--config", type=str, help=argparse.SUPPRESS)

    listing = commands.add_parser("strategies", help="List the six strategies")
    listing.add_argument("--config", type=str, help=argparse.SUPPRESS)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    load_dotenv()
    args = build_parser().parse_args(argv)

    level = getattr(args, "log_level", None) or env_setting("log_level") or default_settings["log_level"]
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        return SuboptCLI(args).run()
    except SuboptError as e:
        print(f"{Fore.RED}Error: {e}{Style.RESET_ALL}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print(f"\n{Fore.YELLOW}Interrupted.{Style.RESET_ALL}", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
