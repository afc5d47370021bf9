"""Optimal surrogate transformations and the proportion of treatment
effect explained, from observational data.

The package estimates a transformation g(s) of a surrogate marker S chosen
so that the treatment effect on g(S) tracks the treatment effect on the
primary outcome Y, together with the ratio of the two effects (PTE).
Confounded treatment assignment is handled by inverse-probability weighting
or by a doubly robust combination with outcome-regression working models;
uncertainty comes from perturbation resampling.
"""

from .comparators import ComparatorResult, freedman, wang_rct
from .data import Dataset, TruthBlock, arm_sizes, load_csv, write_csv
from .errors import SurroPteError
from .kernels import Grid, KernelConfig, default_bandwidth, gaussian_kernel, trapezoid
from .pipeline import FitResult, estimate_dr, estimate_ipw
from .resampling import (
    PerturbationConfig,
    PteReport,
    perturb_weights,
    replicates_frame,
    run_resampling,
)
from .simulation import (
    ResultRow,
    ScenarioSpec,
    TruthValues,
    generate_setting1,
    generate_setting2,
    monte_carlo_truth,
    run_scenario,
    scenario_table,
)

__version__ = "0.1.0"

__all__ = [
    "ComparatorResult",
    "freedman",
    "wang_rct",
    "Dataset",
    "TruthBlock",
    "arm_sizes",
    "load_csv",
    "write_csv",
    "SurroPteError",
    "Grid",
    "KernelConfig",
    "default_bandwidth",
    "gaussian_kernel",
    "trapezoid",
    "FitResult",
    "estimate_dr",
    "estimate_ipw",
    "PerturbationConfig",
    "PteReport",
    "perturb_weights",
    "replicates_frame",
    "run_resampling",
    "ResultRow",
    "ScenarioSpec",
    "TruthValues",
    "generate_setting1",
    "generate_setting2",
    "monte_carlo_truth",
    "run_scenario",
    "scenario_table",
    "__version__",
]
