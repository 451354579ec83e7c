"""Set classification with principal-component subspace features."""

__version__ = "0.1.0"

from .classify import fit_mdeb, fit_ridge_lda, fit_ridge_qda, fit_rule, fit_ya, vote_classify
from .embedding import EmbeddingModel, cmds_extend, cmds_fit
from .exceptions import DegenerateError, DimensionError, SetClassError, SetDataError
from .features import (
    DistanceMatrix,
    SetFeatures,
    canonical_angles,
    extract_features,
    pairwise_distances,
    scale_constant,
    subspace_distance,
)
from .pipeline import TrainConfig, TrainedSetClassifier, load_model, predict, save_model, train
from .selection import SelectionResult, alt_statistic, hotelling_T, permutation_test, select_dimension
from .setdata import ObservationSet, SetCollection, load_collection, save_collection
from .simulate import BenchmarkReport, SimulationConfig, generate_dataset, run_benchmark

__all__ = [
    "BenchmarkReport", "DegenerateError", "DimensionError", "DistanceMatrix", "EmbeddingModel",
    "ObservationSet", "SelectionResult", "SetClassError", "SetCollection", "SetDataError", "SetFeatures",
    "SimulationConfig", "TrainConfig", "TrainedSetClassifier", "alt_statistic", "canonical_angles",
    "cmds_extend", "cmds_fit", "extract_features", "fit_mdeb", "fit_ridge_lda", "fit_ridge_qda", "fit_rule",
    "fit_ya", "generate_dataset", "hotelling_T", "load_collection", "load_model", "pairwise_distances",
    "permutation_test", "predict", "run_benchmark", "save_collection", "save_model", "scale_constant",
    "select_dimension", "subspace_distance", "train", "vote_classify",
]
