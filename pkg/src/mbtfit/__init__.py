"""Markovian binary tree population models fitted to demographic data.

Individuals live through hidden phases of a transient Markovian arrival
process: births are arrivals, death is absorption.  The package fits
the acyclic chain parameterization to either population-average
age-specific rates (weighted nonlinear regression) or per-individual
life vectors (maximum likelihood), selects the number of phases,
quantifies uncertainty with bootstrap/resampling/delta-method bands,
and computes demographic outputs including age-dependent extinction
probabilities.
"""

from .data import (CENSORED, DEATH, GlobalRates, LifeVector, LifeVectorSample,
                   detect_format, read_global_rates, read_json,
                   read_life_vectors, read_model, read_table,
                   write_global_rates, write_json, write_life_vectors,
                   write_model, write_table)
from .demography import (AgeGrid, DemographicCurves, curves,
                         extinction_age_curve, extinction_by_initial_age,
                         extinction_vector, fertility_curve, fertility_rate,
                         mortality_curve, mortality_rate,
                         rates_model_equivalents, survival, survival_curve)
from .errors import (CapacityError, FitError, IterationError, MbtError,
                     NumericError, StructureError)
from .estimation import (FitConfig, FitResult, fit_global, fit_individual,
                         fit_global_model, fit_individual_model,
                         negative_log_likelihood, objective_global,
                         seed_params, survival_weights, with_n)
from .likelihood import (LOG_ZERO, CountKernels, MsilClassVector,
                         PreparedSample, class_masses, classify_vector,
                         count_kernels, enumerate_classes,
                         life_vector_probability, log_likelihood,
                         msil_class_mass, paper_class_count,
                         per_vector_log_probabilities, prepare_sample)
from .model import (AtmmppParams, MatrixExpOptions, TmapModel, Violation,
                    build_atmmpp, ensure_valid, matrix_exp, validate)
from .selection import (SelectionReport, aic, cross_validate, fold_indices,
                        mse_global, msil_partition_mk1, msil_partition_mk2,
                        msil_select)
from .simulation import (ExamplePreset, FamilyTreeResult, PRESETS, SimConfig,
                         Trajectory, aggregate_rates, censor_sample,
                         encode_life_vector, preset, preset_model,
                         replicate_rng, simulate_family_tree,
                         simulate_family_trees, simulate_rates,
                         simulate_sample, simulate_trajectory)
from .uncertainty import ConfidenceBand, band_bootstrap, band_delta, band_resample

__version__ = "0.1.0"

__all__ = [
    "AgeGrid", "AtmmppParams", "CENSORED", "CapacityError", "ConfidenceBand",
    "CountKernels", "DEATH", "DemographicCurves",
    "detect_format", "ExamplePreset",
    "FamilyTreeResult", "PRESETS", "preset", "preset_model",
    "FitConfig", "FitError", "FitResult", "GlobalRates", "IterationError",
    "LOG_ZERO", "LifeVector", "LifeVectorSample", "MatrixExpOptions",
    "MbtError", "MsilClassVector",
    "PreparedSample", "NumericError", "SelectionReport",
    "SimConfig", "StructureError", "TmapModel", "Trajectory", "Violation",
    "aggregate_rates", "aic", "band_bootstrap", "band_delta", "band_resample",
    "build_atmmpp", "censor_sample",
    "class_masses",
    "classify_vector", "count_kernels", "cross_validate",
    "curves", "encode_life_vector", "ensure_valid", "enumerate_classes",
    "extinction_age_curve",
    "extinction_by_initial_age", "extinction_vector", "fertility_curve",
    "fertility_rate",
    "fit_global", "fit_global_model", "fit_individual", "fit_individual_model", "fold_indices",
    "life_vector_probability", "log_likelihood", "matrix_exp",
    "mortality_curve",
    "mortality_rate", "mse_global", "msil_class_mass", "msil_partition_mk1",
    "msil_partition_mk2", "msil_select", "negative_log_likelihood",
    "objective_global",
    "paper_class_count",
    "per_vector_log_probabilities",
    "prepare_sample", "rates_model_equivalents", "replicate_rng", "read_global_rates",
    "read_json",
    "read_life_vectors", "read_model",
    "read_table", "seed_params", "simulate_family_tree",
    "simulate_family_trees", "simulate_rates", "simulate_sample",
    "simulate_trajectory", "survival",
    "survival_curve", "survival_weights", "validate", "with_n",
    "write_global_rates",
    "write_json", "write_life_vectors", "write_model",
    "write_table",
]
