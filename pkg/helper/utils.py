"""Persistence, configuration and formatting helpers for the subopt CLI"""

import configparser
import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from helper.errors import ConfigError, DataError, ParseError
from helper.models import (
    IndividualizedDesign, Mechanism, StrataAssignment, StratifiedDesign, TwoWaveDesign
)

logger = logging.getLogger(__name__)

ENV_PREFIX = "SUBOPT_"


class ResultStorage:
    """File-based storage for results, summaries and run metadata"""

    RESULTS_FILE = "results.csv"
    METADATA_FILE = "run.json"

    def __init__(self, output_dir: Union[str, Path] = "results"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def save_results(self, results: pd.DataFrame) -> Path:
        path = self.output_dir / self.RESULTS_FILE
        results.to_csv(path, index=False)
        logger.info(f"Wrote {len(results)} result rows to {path}")
        return path

    def load_results(self) -> pd.DataFrame:
        path = self.output_dir / self.RESULTS_FILE
        if not path.exists():
            raise DataError(f"No results found at {path}")
        return pd.read_csv(path, float_precision="round_trip")

    def save_metadata(self, settings: Dict[str, Any], elapsed_seconds: float) -> Path:
        """Settings of the run plus timing, kept apart from the results so reruns stay byte-identical"""
        path = self.output_dir / self.METADATA_FILE
        data = {
            "settings": settings,
            "elapsed": format_duration(elapsed_seconds),
            "finished_at": datetime.now().isoformat(timespec="seconds"),
        }
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, default=str)
        return path


def design_frame(design: Union[IndividualizedDesign, StratifiedDesign, TwoWaveDesign]) -> pd.DataFrame:
    """One row per unit describing its stratum, allocation and inclusion probability"""
    if isinstance(design, IndividualizedDesign):
        return pd.DataFrame({
            "unit_id": np.arange(design.N),
            "pi": design.pi,
        })

    strata = design.strata
    k = strata.stratum_of
    if isinstance(design, TwoWaveDesign):
        allocation = design.combined_allocation
        frame = pd.DataFrame({
            "unit_id": np.arange(strata.N),
            "stratum": k,
            "stratum_size": strata.counts[k],
            "allocation": allocation[k],
            "pi": allocation[k] / strata.counts[k],
            "wave1": design.wave1.allocation[k],
            "wave2": design.wave2_allocation[k],
            "pilot": design.wave1_draw.inclusion_mask(strata.N).astype(int),
        })
        return frame
    return pd.DataFrame({
        "unit_id": np.arange(strata.N),
        "stratum": k,
        "stratum_size": strata.counts[k],
        "allocation": design.allocation[k],
        "pi": design.inclusion_probabilities(),
    })


def save_design_csv(design, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    design_frame(design).to_csv(path, index=False)
    return path


def load_design_csv(path: Union[str, Path],
                    mechanism: Mechanism = Mechanism.POISSON) -> Union[IndividualizedDesign, StratifiedDesign]:
    """Read a design written by save_design_csv; two-wave designs come back as their combined allocation"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Design file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if "unit_id" not in frame.columns or "pi" not in frame.columns:
        raise ParseError(f"{path} needs 'unit_id' and 'pi' columns")
    frame = frame.sort_values("unit_id")
    if not np.array_equal(frame["unit_id"].to_numpy(), np.arange(len(frame))):
        raise ParseError(f"{path} must list every unit_id from 0 to N-1 once")

    if "stratum" not in frame.columns:
        return IndividualizedDesign(pi=frame["pi"].to_numpy(dtype=float), mechanism=mechanism)

    stratum_of = frame["stratum"].to_numpy(dtype=np.int64)
    K = int(stratum_of.max()) + 1
    counts = np.bincount(stratum_of, minlength=K).astype(np.int64)
    if np.any(counts == 0):
        raise ParseError(f"{path} skips a stratum index")
    per_stratum = frame.groupby("stratum")["allocation"].agg(["min", "max"])
    if np.any(per_stratum["min"] != per_stratum["max"]):
        raise ParseError(f"{path} gives one stratum two different allocations")
    strata = StrataAssignment(stratum_of=stratum_of, counts=counts,
                              labels=[(k,) for k in range(K)])
    return StratifiedDesign(strata=strata, allocation=per_stratum["max"].to_numpy(dtype=np.int64))


def load_ini_config(path: Optional[Union[str, Path]], section: str) -> Dict[str, str]:
    """Key/value pairs of one INI section; empty when no file is given"""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    parser = configparser.ConfigParser()
    # keep key case: N (population) and n (budget) differ
    parser.optionxform = str
    try:
        parser.read(path, encoding='utf-8')
    except configparser.Error as e:
        raise ConfigError(f"Cannot parse {path}: {e}")
    if not parser.has_section(section):
        return {}
    return {key.replace("-", "_"): value for key, value in parser.items(section)}


def env_setting(name: str, default: Optional[str] = None) -> Optional[str]:
    """SUBOPT_<NAME> from the environment (a .env file is loaded by the CLI)"""
    return os.getenv(f"{ENV_PREFIX}{name.upper()}", default)


def parse_int_list(text: Union[str, List[int]]) -> List[int]:
    """'800,1200 1600' -> [800, 1200, 1600]"""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(part) for part in str(text).replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"Expected a list of integers, got '{text}'")


def format_duration(seconds: float) -> str:
    """Format a run time for status lines"""
    if seconds < 1:
        return f"{seconds * 1000:.0f} ms"
    elif seconds < 60:
        return f"{seconds:.1f} s"
    elif seconds < 3600:
        minutes, rest = divmod(seconds, 60)
        return f"{int(minutes)} min {int(rest)} s"
    else:
        hours, rest = divmod(seconds, 3600)
        return f"{int(hours)} h {int(rest // 60)} min"
