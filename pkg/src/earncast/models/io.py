"""Self-describing single-file binary serialization for trained models.

Layout: 8-byte magic ``ERNCMDL\\0``, u32 format version, u32 header length,
UTF-8 JSON header (kind, scalar metadata, array directory), then the raw
array blobs in directory order (little-endian, C-contiguous). Byte output is
deterministic for a given model.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .gbt import GbtClassifier
from .mlp import MlpRegressor
from .rf import RfClassifier
from .tree import DecisionTree, ModelError

MAGIC = b"ERNCMDL\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")

_TREE_FIELDS = ("feature", "threshold", "left", "right", "value")


def _tree_arrays(prefix: str, tree: DecisionTree) -> list[tuple[str, np.ndarray]]:
    return [(f"{prefix}_{f}", getattr(tree, f)) for f in _TREE_FIELDS]


def _collect(model) -> tuple[str, dict, list[tuple[str, np.ndarray]]]:
    if isinstance(model, GbtClassifier):
        meta = {
            "learning_rate": model.learning_rate,
            "base_score": model.base_score,
            "n_features": model.n_features,
            "train_prior": model.train_prior,
            "n_trees": model.n_trees,
            "tree_depths": [t.depth for t in model.trees],
        }
        arrays = [("train_loss_curve", model.train_loss_curve)]
        for i, tree in enumerate(model.trees):
            arrays += _tree_arrays(f"tree{i}", tree)
        return "gbt", meta, arrays
    if isinstance(model, RfClassifier):
        meta = {
            "n_features": model.n_features,
            "train_prior": model.train_prior,
            "oob_accuracy": model.oob_accuracy,
            "n_trees": model.n_trees,
            "tree_depths": [t.depth for t in model.trees],
        }
        arrays = []
        for i, tree in enumerate(model.trees):
            arrays += _tree_arrays(f"tree{i}", tree)
        return "rf", meta, arrays
    if isinstance(model, MlpRegressor):
        meta = {
            "target_mean": model.target_mean,
            "target_std": model.target_std,
            "dropout": model.dropout,
            "n_features": model.n_features,
            "best_epoch": model.best_epoch,
            "n_layers": len(model.weights),
        }
        arrays = [("feat_mean", model.feat_mean), ("feat_std", model.feat_std),
                  ("val_curve", model.val_curve)]
        for i, (W, b) in enumerate(zip(model.weights, model.biases)):
            arrays += [(f"w{i}", W), (f"b{i}", b)]
        return "mlp", meta, arrays
    raise ModelError(f"cannot serialize {type(model).__name__}")


def serialize_model(model) -> bytes:
    kind, meta, arrays = _collect(model)
    directory = []
    blobs = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        directory.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps(
        {"kind": kind, "meta": meta, "arrays": directory}, sort_keys=True
    ).encode("utf-8")
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(blobs)


def save_model(model, path: str | Path) -> None:
    Path(path).write_bytes(serialize_model(model))


def _rebuild_trees(n_trees, depths, arrays) -> list[DecisionTree]:
    trees = []
    for i in range(n_trees):
        fields = {f: arrays[f"tree{i}_{f}"] for f in _TREE_FIELDS}
        trees.append(DecisionTree(depth=int(depths[i]), **fields))
    return trees


def deserialize_model(data: bytes):
    if len(data) < _PREFIX.size:
        raise ModelError("truncated model file")
    magic, version, header_len = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise ModelError(f"bad model magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {version}")
    header = json.loads(data[_PREFIX.size : _PREFIX.size + header_len])
    offset = _PREFIX.size + header_len
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = dtype.itemsize * count
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
        offset += nbytes

    kind, meta = header["kind"], header["meta"]
    if kind == "gbt":
        return GbtClassifier(
            trees=_rebuild_trees(meta["n_trees"], meta["tree_depths"], arrays),
            learning_rate=meta["learning_rate"],
            base_score=meta["base_score"],
            n_features=meta["n_features"],
            train_prior=meta["train_prior"],
            train_loss_curve=arrays["train_loss_curve"],
        )
    if kind == "rf":
        return RfClassifier(
            trees=_rebuild_trees(meta["n_trees"], meta["tree_depths"], arrays),
            n_features=meta["n_features"],
            train_prior=meta["train_prior"],
            oob_accuracy=meta["oob_accuracy"],
        )
    if kind == "mlp":
        n_layers = meta["n_layers"]
        return MlpRegressor(
            weights=[arrays[f"w{i}"] for i in range(n_layers)],
            biases=[arrays[f"b{i}"] for i in range(n_layers)],
            feat_mean=arrays["feat_mean"],
            feat_std=arrays["feat_std"],
            target_mean=meta["target_mean"],
            target_std=meta["target_std"],
            dropout=meta["dropout"],
            n_features=meta["n_features"],
            best_epoch=meta["best_epoch"],
            val_curve=arrays["val_curve"],
        )
    raise ModelError(f"unknown model kind {kind!r}")


def load_model(path: str | Path):
    return deserialize_model(Path(path).read_bytes())


def describe(model) -> str:
    """Human-readable dump of config and schema for debugging."""
    kind, meta, arrays = _collect(model)
    lines = [f"model kind: {kind}"]
    for key in sorted(meta):
        lines.append(f"  {key}: {meta[key]}")
    if kind in ("gbt", "rf"):
        leaves = [t.n_leaves for t in model.trees]
        lines.append(f"  tree leaves: min={min(leaves)} max={max(leaves)}")
    lines.append(f"  arrays: {len(arrays)}")
    return "\n".join(lines)
