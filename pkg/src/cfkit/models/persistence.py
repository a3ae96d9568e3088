"""Versioned JSON persistence for classifiers and flows.

The document stores flat float64 parameter arrays plus whatever metadata the
caller attaches (feature names, scaler statistics, label mapping). Floats
round-trip exactly through JSON, so save/load is lossless and a rerun with
identical parameters produces byte-identical files.
"""

import json

import numpy as np

from .. import autodiff as ad
from ..exceptions import DataError
from .classifiers import LogisticClassifier, MlpClassifier
from .flow import ConditionalAffineFlow

FORMAT_VERSION = 1


def _pack(tensors):
    return {
        "shapes": [list(t.shape) for t in tensors],
        "values": [t.data.ravel().tolist() for t in tensors],
    }


def _unpack(block):
    return [
        np.asarray(vals, dtype=np.float64).reshape(shape)
        for shape, vals in zip(block["shapes"], block["values"])
    ]


def save_model(model, path, metadata=None):
    if isinstance(model, (LogisticClassifier, MlpClassifier)):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": model.kind,
            "n_features": model.n_features_,
            "n_classes": model.n_classes_,
            "hyperparams": model.get_params(),
            "params": _pack(model._param_tensors()),
        }
    elif isinstance(model, ConditionalAffineFlow):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": "conditional-flow",
            "n_features": model.n_features_,
            "n_classes": model.n_classes_,
            "hyperparams": model.get_params(),
            "params": _pack(model._param_tensors()),
        }
    else:
        raise DataError(f"cannot persist model of type {type(model).__name__}")
    doc["metadata"] = metadata or {}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported model format version {version!r} "
            f"(expected {FORMAT_VERSION})"
        )
    kind = doc.get("kind")
    if kind == "logistic-regression":
        model = LogisticClassifier(**doc["hyperparams"])
    elif kind == "mlp":
        model = MlpClassifier(**doc["hyperparams"])
    elif kind == "conditional-flow":
        model = ConditionalAffineFlow(**doc["hyperparams"])
    else:
        raise DataError(f"{path}: unknown model kind {kind!r}")

    model.n_features_ = int(doc["n_features"])
    model.n_classes_ = int(doc["n_classes"])
    rng = np.random.default_rng(0)
    model._init_params(model.n_features_, model.n_classes_, rng)
    arrays = _unpack(doc["params"])
    tensors = model._param_tensors()
    if len(arrays) != len(tensors):
        raise DataError(f"{path}: parameter count mismatch")
    for t, arr in zip(tensors, arrays):
        if tuple(t.shape) != tuple(arr.shape):
            raise DataError(f"{path}: parameter shape mismatch")
        t.data = arr
    if kind in ("logistic-regression", "mlp"):
        model.classes_ = np.arange(model.n_classes_)
    model.metadata = doc.get("metadata", {})
    return model
