"""The rank regressor: a sigmoid-hidden, linear-output feed-forward net.

Raw outputs regress rank values directly, so a LOWER raw output means a MORE
preferred strategy; reranking is an argsort of the raw outputs with ties
broken by strategy index.  Models are immutable values; a training step
returns a new model.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import backend
from .features import FeatureScaler
from .rngutil import as_generator

MODEL_FORMAT = "prefassist-model"
MODEL_VERSION = 1


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Weights plus bookkeeping metadata and the input scaler."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    metadata: dict
    scaler: FeatureScaler | None = None

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.array(getattr(self, name), dtype=float, order="C")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n_in, hidden = self.w1.shape
        if self.b1.shape != (hidden,):
            raise ValueError("b1 does not match hidden width")
        if self.w2.shape[0] != hidden:
            raise ValueError("w2 does not chain with the hidden layer")
        if self.b2.shape != (self.w2.shape[1],):
            raise ValueError("b2 does not match output width")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.w1.shape[0], self.w1.shape[1], self.w2.shape[1])

    def weight_arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)


def init_network(shape=(12, 16, 3), seed=0, metadata: dict | None = None,
                 scaler: FeatureScaler | None = None) -> NetworkModel:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    n_in, hidden, n_out = shape
    if min(shape) < 1:
        raise ValueError("layer sizes must be positive")
    rng = as_generator(seed)
    r1 = math.sqrt(6.0 / (n_in + hidden))
    r2 = math.sqrt(6.0 / (hidden + n_out))
    w1 = rng.uniform(-r1, r1, size=(n_in, hidden))
    w2 = rng.uniform(-r2, r2, size=(hidden, n_out))
    meta = {"input_dim": n_in, "strategy_count": n_out,
            "seed": seed if isinstance(seed, int) else None,
            "version": MODEL_VERSION}
    if metadata:
        meta.update(metadata)
    return NetworkModel(w1, np.zeros(hidden), w2, np.zeros(n_out), meta, scaler)


def forward(m: NetworkModel, x: np.ndarray) -> np.ndarray:
    """Raw network outputs for one input vector or a batch of rows."""
    arr = np.ascontiguousarray(np.asarray(x, dtype=float))
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != m.shape[0]:
        raise ValueError(f"input dim {arr.shape[1]} != model input {m.shape[0]}")
    out = backend.nn_forward(m.w1, m.b1, m.w2, m.b2, arr)
    return out[0] if single else out


def predict_raw(m: NetworkModel, features: np.ndarray) -> np.ndarray:
    """Forward pass on raw features, applying the model's scaler if present."""
    x = np.asarray(features, dtype=float)
    if m.scaler is not None:
        x = m.scaler.transform(x)
    return forward(m, x)


def rerank(raw: np.ndarray) -> np.ndarray:
    """Ranks 1..N, rank 1 for the smallest raw output; ties by index."""
    raw = np.asarray(raw, dtype=float)
    order = np.argsort(raw, kind="stable")
    ranks = np.empty(raw.shape[0], dtype=np.int64)
    ranks[order] = np.arange(1, raw.shape[0] + 1)
    return ranks


def rerank_matrix(raw: np.ndarray) -> np.ndarray:
    """Row-wise rerank for a batch of raw outputs."""
    raw = np.asarray(raw, dtype=float)
    order = np.argsort(raw, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(raw.shape[0])[:, None]
    ranks[rows, order] = np.arange(1, raw.shape[1] + 1)
    return ranks


def is_rank_vector(r: np.ndarray) -> bool:
    r = np.asarray(r)
    return bool(np.array_equal(np.sort(r), np.arange(1, r.shape[0] + 1)))


def train_step(m: NetworkModel, x: np.ndarray, targets: np.ndarray,
               learning_rate: float) -> tuple[NetworkModel, float]:
    """One full-batch gradient-descent step on MSE against rank targets.

    Returns the updated model and the pre-step loss.
    """
    x = np.ascontiguousarray(np.asarray(x, dtype=float))
    y = np.ascontiguousarray(np.asarray(targets, dtype=float))
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a non-empty matrix")
    if y.shape != (x.shape[0], m.shape[2]):
        raise ValueError("targets must be (batch, outputs)")
    w1, b1, w2, b2, loss = backend.nn_train_step(
        m.w1, m.b1, m.w2, m.b2, x, y, float(learning_rate))
    return replace(m, w1=w1, b1=b1, w2=w2, b2=b2), float(loss)


def serialize(m: NetworkModel) -> bytes:
    """Versioned JSON; float round-trip is bit-exact."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "shape": list(m.shape),
        "weights": {
            "w1": m.w1.tolist(),
            "b1": m.b1.tolist(),
            "w2": m.w2.tolist(),
            "b2": m.b2.tolist(),
        },
        "scaler": m.scaler.to_dict() if m.scaler is not None else None,
        "metadata": m.metadata,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def deserialize(data: bytes | str) -> NetworkModel:
    doc = json.loads(data)
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a prefassist model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    w = doc["weights"]
    scaler = FeatureScaler.from_dict(doc["scaler"]) if doc.get("scaler") else None
    return NetworkModel(np.asarray(w["w1"]), np.asarray(w["b1"]),
                        np.asarray(w["w2"]), np.asarray(w["b2"]),
                        dict(doc.get("metadata", {})), scaler)


def model_hash(m: NetworkModel) -> str:
    return hashlib.sha256(serialize(m)).hexdigest()[:16]


def with_metadata(m: NetworkModel, **updates) -> NetworkModel:
    meta = dict(m.metadata)
    meta.update(updates)
    return replace(m, metadata=meta)


def with_scaler(m: NetworkModel, scaler: FeatureScaler | None) -> NetworkModel:
    return replace(m, scaler=scaler)
