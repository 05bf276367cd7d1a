"""From-scratch ML core: classifiers, PCA, metrics, splitting, seeding."""

from .metrics import MlError, f1_score, k_fold_split
from .models import (
    KINDS,
    BoostingParams,
    Dataset,
    ForestParams,
    KnnParams,
    LogisticParams,
    RegressionForest,
    TrainedModel,
    TreeParams,
    fit,
    fit_forest_tree,
    logistic_loss_grad,
    resolve_max_features,
    sigmoid,
)
from .pca import PcaModel, fit_pca
from .seeding import child_rng, child_seed
from .tree import DecisionTree

__all__ = [
    "KINDS", "MlError", "f1_score", "k_fold_split",
    "BoostingParams", "Dataset", "ForestParams", "KnnParams", "LogisticParams",
    "RegressionForest", "TrainedModel", "TreeParams", "fit", "fit_forest_tree",
    "logistic_loss_grad", "resolve_max_features", "sigmoid",
    "PcaModel", "fit_pca", "child_rng", "child_seed", "DecisionTree",
]
