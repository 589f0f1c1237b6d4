"""Black-box optimization with a rank-one-plus-isotropic Gaussian search
distribution, exact O(d) natural-gradient updates, diagonal and
full-covariance baselines, a unimodal benchmark suite, and a reproducible
experiment harness."""

from .benchmarks import FUNCTION_NAMES, Problem, make_problem, make_suite, suite_manifest
from .baselines import run_snes, run_xnes
from .distribution import RankOneGaussian, deserialize, log_density, sample, serialize
from .errors import (
    ConfigError,
    CovarianceError,
    DegenerateDirectionError,
    DimensionError,
    EvaluationError,
)
from .harness import Campaign, CellSummary, load_campaign, run_campaign, timing_probe
from .natural_gradient import fisher_exact, fisher_inverse, natural_grad_sample
from .optimizer import (
    GenerationTrace,
    OptimizerConfig,
    RunRecord,
    rank_utilities,
    run,
    shape_fitness,
    step,
)
from .validation import run_oracle_suite

__version__ = "0.1.0"

__all__ = [
    "Campaign",
    "CellSummary",
    "ConfigError",
    "CovarianceError",
    "DegenerateDirectionError",
    "DimensionError",
    "EvaluationError",
    "FUNCTION_NAMES",
    "GenerationTrace",
    "OptimizerConfig",
    "Problem",
    "RankOneGaussian",
    "RunRecord",
    "deserialize",
    "fisher_exact",
    "fisher_inverse",
    "load_campaign",
    "log_density",
    "make_problem",
    "make_suite",
    "natural_grad_sample",
    "rank_utilities",
    "run",
    "run_campaign",
    "run_oracle_suite",
    "run_snes",
    "run_xnes",
    "sample",
    "serialize",
    "shape_fitness",
    "step",
    "suite_manifest",
    "timing_probe",
    "__version__",
]
