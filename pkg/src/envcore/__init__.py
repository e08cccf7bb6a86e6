"""Constrained multivariate regression with envelope dimension reduction.

Estimation of the multivariate linear model Y = beta0 + beta X + eps when
the coefficient matrix is known to satisfy span(beta) <= span(U), with
envelope (reducing-subspace) variants that discard immaterial response
variation for large efficiency gains.  Includes maximum-likelihood fits,
plug-in asymptotic variances, BIC dimension selection, likelihood-ratio
and Wald tests, contrast and profile estimation, and a reproducible Monte
Carlo study harness.
"""

from . import kernels
from .datasets import load_dental
from .errors import (DataError, DegenerateVariance, DimensionMismatch,
                     EnvcoreError, InvalidPartition, InvalidSpec,
                     NoConvergence, NonPositiveDefinite, RankDeficientContrast,
                     RankDeficientU, SingularDesign, SingularMoment,
                     Unidentifiable)
from .estimators import (EnvelopeFit, fit_cm, fit_ecm, fit_em, fit_secm,
                         fit_um)
from .inference import (ContrastFit, ProfileEstimate, TestResult,
                        estimate_profile, fit_contrast, select_dimension,
                        test_rows, wald_pvalues)
from .linalg import (OptimizerOptions, canonicalize, complete_basis,
                     envelope_objective, minimize_envelope_objective,
                     subspace_distance)
from .model import Dataset, Moments, build_transform, compute_moments
from .sim import (ScenarioSpec, SimulationReport, generate_scenario,
                  population_summary, run_bias_sweep, run_ecm_study,
                  run_efficiency_study, run_size_calibration, scenario)

__version__ = "0.1.0"

BACKEND = kernels.BACKEND

__all__ = [
    "BACKEND", "ContrastFit", "DataError", "Dataset", "DegenerateVariance",
    "DimensionMismatch", "EnvcoreError", "EnvelopeFit", "InvalidPartition",
    "InvalidSpec", "Moments", "NoConvergence", "NonPositiveDefinite",
    "OptimizerOptions", "ProfileEstimate", "RankDeficientContrast",
    "RankDeficientU", "ScenarioSpec", "SimulationReport", "SingularDesign",
    "SingularMoment", "TestResult", "Unidentifiable", "build_transform",
    "canonicalize", "complete_basis", "compute_moments",
    "envelope_objective", "estimate_profile", "fit_cm", "fit_contrast",
    "fit_ecm", "fit_em", "fit_secm", "fit_um", "generate_scenario",
    "load_dental", "minimize_envelope_objective", "population_summary",
    "run_bias_sweep", "run_ecm_study", "run_efficiency_study",
    "run_size_calibration", "scenario", "select_dimension",
    "subspace_distance", "test_rows", "wald_pvalues",
]
