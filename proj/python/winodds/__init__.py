"""Covariate-adjusted win odds for hierarchical composite endpoints."""

import csv
import io

from ._core import (
    DataError,
    Dataset,
    FitError,
    InferenceError,
    StudyAbort,
    analyze,
    fit_pim,
    run_study,
    scenario_weights,
    simulate_trial,
    tally,
)

__all__ = [
    "DataError",
    "Dataset",
    "FitError",
    "InferenceError",
    "StudyAbort",
    "analyze",
    "fit_pim",
    "power_table",
    "run_study",
    "scenario_weights",
    "simulate_trial",
    "tally",
]


def power_table(**kwargs):
    """Runs a Monte-Carlo study and returns its rows as dictionaries."""
    rows = list(csv.DictReader(io.StringIO(run_study(**kwargs))))
    for row in rows:
        for key in ("n", "adjustment_size", "reps", "seed"):
            row[key] = int(row[key])
        for key in ("rate", "mc_halfwidth"):
            row[key] = float(row[key])
    return rows
