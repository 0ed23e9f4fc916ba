"""Seed-deterministic model families: boosted trees, random forest, MLP."""

from .config import GbtParams, MlpParams, RfParams, TrainConfig
from .gbt import GbtClassifier, train_gbt
from .io import describe, load_model, save_model, serialize_model
from .mlp import DivergenceError, MlpRegressor, mlp_predict, train_mlp
from .rf import RfClassifier, train_rf
from .tree import DecisionTree, ModelError, SchemaMismatchError, SingleClassError


def predict_proba(model, features):
    """Direction probability P(label = 1) for a feature row or matrix."""
    import numpy as np

    arr = np.asarray(features, dtype=np.float64)
    out = model.predict_proba(arr)
    return float(out[0]) if arr.ndim == 1 else out


__all__ = [
    "DecisionTree",
    "DivergenceError",
    "GbtClassifier",
    "GbtParams",
    "MlpParams",
    "MlpRegressor",
    "ModelError",
    "RfClassifier",
    "RfParams",
    "SchemaMismatchError",
    "SingleClassError",
    "TrainConfig",
    "describe",
    "load_model",
    "mlp_predict",
    "predict_proba",
    "save_model",
    "serialize_model",
    "train_gbt",
    "train_mlp",
    "train_rf",
]
