"""Cross-robot knowledge transfer operators and the refinement pipeline.

Weight-identical direct transfer, the positive/negative rectifier transfers
(which recompose the original model exactly), the per-layer enhanced
transfer, and warm-started stagewise refinement on a stratified subsample of
the target robot's data.  Biases take part in rectification and in the
layer-mean pool, keeping the operators total over all parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .hands import HandSchema
from .network import NetworkModel, model_hash, with_metadata
from .rngutil import substream
from .smu import SmuConfig, TrainingCurve, train_smu

TRANSFER_METHODS = ("direct", "trpw", "trnw", "trew")


@dataclass(frozen=True)
class TransferConfig:
    method: str = "trew"
    alpha: float = 0.3            # enhanced-transfer gain
    trew_amplify: bool = False    # use (1+alpha) instead of (1-alpha) scaling
    refine_stages: int = 4
    refine_fraction: float = 0.5
    source_metric: str = "smuwt"
    seed: int = 0

    def __post_init__(self):
        if self.method not in TRANSFER_METHODS:
            raise ValueError(f"method must be one of {TRANSFER_METHODS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.refine_fraction <= 1.0:
            raise ValueError("refine_fraction must lie in (0, 1]")
        if self.refine_stages < 1:
            raise ValueError("refine_stages must be positive")


def _retarget(m: NetworkModel, source: NetworkModel, method: str,
              target_schema, **extra) -> NetworkModel:
    if isinstance(target_schema, HandSchema):
        schema_id, robot = target_schema.fingerprint, target_schema.name
    else:
        schema_id = robot = str(target_schema)
    provenance = {"method": method, "source": model_hash(source)}
    provenance.update(extra)
    return with_metadata(m, schema=schema_id, robot=robot, provenance=provenance)


def transfer_direct(m: NetworkModel, target_schema) -> NetworkModel:
    """Weight-identical copy retargeted at the other robot."""
    return _retarget(m, m, "direct", target_schema)


def transfer_positive(m: NetworkModel, target_schema) -> NetworkModel:
    """Keep only non-negative weights and biases."""
    out = replace(m, w1=np.maximum(m.w1, 0.0), b1=np.maximum(m.b1, 0.0),
                  w2=np.maximum(m.w2, 0.0), b2=np.maximum(m.b2, 0.0))
    return _retarget(out, m, "trpw", target_schema)


def transfer_negative(m: NetworkModel, target_schema) -> NetworkModel:
    """Keep only non-positive weights and biases."""
    out = replace(m, w1=np.minimum(m.w1, 0.0), b1=np.minimum(m.b1, 0.0),
                  w2=np.minimum(m.w2, 0.0), b2=np.minimum(m.b2, 0.0))
    return _retarget(out, m, "trnw", target_schema)


def _enhance_layer(w: np.ndarray, b: np.ndarray, alpha: float, coef: float):
    layer_mean = float(np.concatenate([w.ravel(), b]).mean())
    return coef * w - alpha * layer_mean, coef * b - alpha * layer_mean


def transfer_enhanced(m: NetworkModel, target_schema, alpha: float = 0.3,
                      amplify: bool = False) -> NetworkModel:
    """Per-layer affine reshaping around the layer's mean parameter.

    theta' = (1 - alpha)*theta - alpha*mean, applied elementwise with the
    mean pooled over that layer's weights and biases.  ``amplify`` switches
    the scaling to (1 + alpha), pushing parameters away from the mean
    instead of toward its reflection.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    coef = 1.0 + alpha if amplify else 1.0 - alpha
    w1, b1 = _enhance_layer(m.w1, m.b1, alpha, coef)
    w2, b2 = _enhance_layer(m.w2, m.b2, alpha, coef)
    out = replace(m, w1=w1, b1=b1, w2=w2, b2=b2)
    return _retarget(out, m, "trew", target_schema, alpha=alpha, amplify=amplify)


def apply_transfer(m: NetworkModel, method: str, target_schema,
                   cfg: TransferConfig) -> NetworkModel:
    if method == "direct":
        return transfer_direct(m, target_schema)
    if method == "trpw":
        return transfer_positive(m, target_schema)
    if method == "trnw":
        return transfer_negative(m, target_schema)
    if method == "trew":
        return transfer_enhanced(m, target_schema, cfg.alpha, cfg.trew_amplify)
    raise ValueError(f"unknown transfer method {method!r}")


def stratified_subsample(records, fraction: float, rng) -> list:
    """Subsample ``round(fraction*n)`` records, stratified by (task, rank).

    Quotas use largest-remainder rounding so the total is exact; strata are
    visited in a deterministic key order.
    """
    records = list(records)
    target_total = int(round(fraction * len(records)))
    groups = {}
    for idx, rec in enumerate(records):
        key = (rec.task.value, tuple(rec.rank.tolist()))
        groups.setdefault(key, []).append(idx)
    keys = sorted(groups)
    quotas = {k: fraction * len(groups[k]) for k in keys}
    counts = {k: int(np.floor(quotas[k])) for k in keys}
    short = target_total - sum(counts.values())
    by_remainder = sorted(keys, key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in by_remainder[:max(short, 0)]:
        counts[k] += 1
    chosen = []
    for k in keys:
        idxs = groups[k]
        take = min(counts[k], len(idxs))
        pick = rng.choice(len(idxs), size=take, replace=False)
        chosen.extend(idxs[int(i)] for i in np.sort(pick))
    chosen.sort()
    return [records[i] for i in chosen]


def refine(m_transferred: NetworkModel, records, smu_cfg: SmuConfig,
           fraction: float) -> TrainingCurve:
    """Warm-started stagewise refinement on a data subsample.

    Subsamples ``fraction`` of the target robot's records (stratified by task
    and rank label), then runs the stagewise trainer initialized from the
    transferred model.  The trainer refits the input scaler on its training
    split, so the refined model standardizes with target-robot statistics.
    """
    sub = stratified_subsample(records, fraction,
                               substream(smu_cfg.seed, "refine-sample"))
    if len(sub) < 10:
        raise ValueError("refine subsample has fewer than 10 records")
    return train_smu(sub, smu_cfg, initial_model=m_transferred)
