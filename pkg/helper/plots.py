"""SVG charts of empirical MSE against the budget"""

import logging
from pathlib import Path
from typing import List, Union

import matplotlib
matplotlib.use('Agg')  # Use non-interactive backend
import matplotlib.pyplot as plt
import pandas as pd

from helper.errors import NoData
from helper.models import StrategyId

logger = logging.getLogger(__name__)

PLOT_KEYS = ["scenario", "p", "error_level", "n1"]
SUMMARY_FILE = "summary.csv"


def _plot_name(scenario: str, p: int, error_level: str, n1: int) -> str:
    return f"mse_{scenario}_p{p}_{error_level}_n1-{n1}.svg"


def emit_plots(summary: pd.DataFrame, output_dir: Union[str, Path]) -> List[Path]:
    """
    One MSE-vs-n line chart per (scenario, p, error level, pilot size).

    Strategies that need y for the whole cohort are drawn dashed. The
    summary table is written next to the charts.

    Returns:
        Paths of the SVG files written
    """
    if summary is None or len(summary) == 0 or summary["strategy"].nunique() == 0:
        raise NoData("Nothing to plot: the summary has no strategies")

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    summary.to_csv(output_dir / SUMMARY_FILE, index=False)

    written = []
    with plt.rc_context({"svg.fonttype": "none", "svg.hashsalt": "subopt"}):
        for (scenario, p, error_level, n1), cell in summary.groupby(PLOT_KEYS, sort=False):
            fig, ax = plt.subplots(figsize=(7, 4.5))
            for strategy_name, lines in cell.groupby("strategy", sort=False):
                strategy = StrategyId(strategy_name)
                lines = lines.sort_values("n")
                line, = ax.plot(
                    lines["n"], lines["mse"], marker="o",
                    linestyle="--" if strategy.is_oracle else "-",
                    label=f"{strategy.number}: {strategy.value}",
                )
                line.set_gid(f"strategy-{strategy.value}")
            ax.set_xlabel("Subsample size n")
            ax.set_ylabel("Empirical MSE")
            ax.set_title(f"{scenario}, p={p}, error={error_level}, n1={n1}")
            ax.legend(fontsize=8)
            ax.grid(True, alpha=0.3)

            path = output_dir / _plot_name(scenario, p, error_level, n1)
            fig.savefig(path, format="svg", bbox_inches="tight",
                        metadata={"Date": None})
            plt.close(fig)
            written.append(path)
            logger.info(f"Saved MSE chart to {path}")
    return written
