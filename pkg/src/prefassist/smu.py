"""Stagewise model updating: snapshot pools, the epsilon-updating policy,
weight-distribution rollback, the conventional baseline, and curve statistics.

A training run is a chain of stages.  Each stage trains a stand-alone copy of
the current model for a fixed number of full-batch steps, snapshotting every
N iterations into a candidate pool scored on a fixed validation split.  The
stage's candidate comes from the pool (metric-best, or uniform-random with
probability epsilon); the weight-tendency variant (smuwt) additionally
rejects candidates whose weight distribution moved too far (histogram KL
above the threshold) or whose validation accuracy decreased, restoring the
last safe model instead.  A rejected stage still consumes its step budget;
the next stage re-attempts from the safe model with a fresh RNG substream, so
stagewise and baseline training always spend identical gradient-step budgets.

The three pool metrics:
  smupa - validation exact-rank accuracy (higher is better)
  smupe - validation RMS error on raw outputs (lower is better)
  smuwt - selection as smupa, plus the KL/accuracy rollback guard
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureScaler
from .hands import TaskLabel
from .network import (NetworkModel, init_network, is_rank_vector, predict_raw,
                      rerank_matrix, train_step, with_scaler)
from .rngutil import substream

METRICS = ("smupa", "smupe", "smuwt")

PROVENANCE_BEST = "best"
PROVENANCE_RANDOM = "random"
PROVENANCE_ROLLBACK = "rollback"
PROVENANCE_BASELINE = "baseline"


@dataclass(frozen=True, eq=False)
class LabeledRecord:
    """One (command, evaluator) trial: raw features and the rank label."""

    trial_id: str
    task: TaskLabel
    features: np.ndarray
    rank: np.ndarray
    evaluator_id: int
    robot: str
    presented: int = 0

    def __post_init__(self):
        feats = np.array(self.features, dtype=float, order="C")
        rank = np.asarray(self.rank, dtype=np.int64)
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        if not is_rank_vector(rank):
            raise ValueError(f"rank {rank.tolist()} is not a permutation of 1..n")
        feats.setflags(write=False)
        rank.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "rank", rank)


@dataclass(eq=False)
class LabeledDataset:
    """Record list plus optional split assignment (indices into records)."""

    records: list
    splits: dict | None = None

    def __len__(self) -> int:
        return len(self.records)

    def feature_matrix(self) -> np.ndarray:
        return np.asarray([r.features for r in self.records], dtype=float)

    def rank_matrix(self) -> np.ndarray:
        return np.asarray([r.rank for r in self.records], dtype=np.int64)

    def for_task(self, task: TaskLabel) -> "LabeledDataset":
        return LabeledDataset([r for r in self.records if r.task == task])


@dataclass(frozen=True)
class SmuConfig:
    stages: int = 20
    iterations_per_stage: int = 200
    snapshot_every: int = 10
    epsilon: float = 0.1
    kl_threshold: float = 0.5
    kl_bins: int = 20
    metric: str = "smuwt"
    learning_rate: float = 0.2
    seed: int = 0
    split: tuple = (0.7, 0.15, 0.15)
    hidden_units: int = 16

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.stages < 1 or self.iterations_per_stage < 1:
            raise ValueError("stages and iterations must be positive")
        if self.iterations_per_stage % self.snapshot_every != 0:
            raise ValueError("iterations_per_stage must be divisible by snapshot_every")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.kl_threshold <= 0.0:
            raise ValueError("kl_threshold must be positive")
        if self.kl_bins < 2:
            raise ValueError("kl_bins must be at least 2")
        if len(self.split) != 3 or min(self.split) <= 0 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split must be three positive fractions summing to 1")


@dataclass(frozen=True, eq=False)
class Snapshot:
    iteration: int
    model: NetworkModel
    score: float


@dataclass(eq=False)
class SnapshotPool:
    """Ordered snapshot candidates, bounded by iterations/snapshot_every."""

    capacity: int
    entries: list = field(default_factory=list)

    def append(self, snap: Snapshot):
        if len(self.entries) >= self.capacity:
            raise ValueError("snapshot pool is full")
        if self.entries and snap.iteration <= self.entries[-1].iteration:
            raise ValueError("snapshot iterations must be strictly increasing")
        self.entries.append(snap)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class StageRecord:
    stage: int
    val_accuracy: float
    provenance: str
    kl_value: float  # nan when the guard metric was not computed


@dataclass(eq=False)
class TrainingCurve:
    """Per-stage accepted validation accuracy with provenance."""

    records: list
    final_model: NetworkModel
    total_steps: int
    split_indices: dict | None = None

    @property
    def accuracies(self) -> np.ndarray:
        return np.asarray([r.val_accuracy for r in self.records], dtype=float)


def accuracy(m: NetworkModel, eval_records) -> float:
    """Fraction of records whose reranked prediction matches the label exactly."""
    if len(eval_records) == 0:
        raise ValueError("evaluation split is empty")
    raw = predict_raw(m, np.asarray([r.features for r in eval_records], dtype=float))
    ranks = rerank_matrix(raw)
    labels = np.asarray([r.rank for r in eval_records], dtype=np.int64)
    return float(np.mean(np.all(ranks == labels, axis=1)))


def flexible_accuracy(m: NetworkModel, eval_records) -> dict:
    """Exact-rank accuracy plus the two flexible readings.

    top2: the set of strategies ranked above last matches the label's set.
    least: the least-preferred strategy matches.
    """
    if len(eval_records) == 0:
        raise ValueError("evaluation split is empty")
    raw = predict_raw(m, np.asarray([r.features for r in eval_records], dtype=float))
    ranks = rerank_matrix(raw)
    labels = np.asarray([r.rank for r in eval_records], dtype=np.int64)
    n = ranks.shape[1]
    exact = np.all(ranks == labels, axis=1)
    pred_least = np.argmax(ranks == n, axis=1)
    true_least = np.argmax(labels == n, axis=1)
    least = pred_least == true_least
    top2 = np.all((ranks < n) == (labels < n), axis=1)
    return {"exact": float(np.mean(exact)), "top2": float(np.mean(top2)),
            "least": float(np.mean(least))}


def rms_error(m: NetworkModel, eval_records) -> float:
    """Mean per-record euclidean error between raw outputs and rank labels."""
    if len(eval_records) == 0:
        raise ValueError("evaluation split is empty")
    raw = predict_raw(m, np.asarray([r.features for r in eval_records], dtype=float))
    labels = np.asarray([r.rank for r in eval_records], dtype=float)
    return float(np.mean(np.sqrt(np.sum((raw - labels) ** 2, axis=1))))


def histogram_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence sum(p*ln(p/q)) between two normalized histograms."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("histograms must have the same bin count")
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def weight_kl(m_ref: NetworkModel, m_cur: NetworkModel, bins: int = 20) -> float:
    """Histogram KL between the pooled weight distributions of two models.

    Bins span the union range of both weight pools; every bin receives 1e-9
    smoothing mass before normalization.  Returns 0 for a degenerate range.
    """
    ref = np.concatenate([a.ravel() for a in m_ref.weight_arrays()])
    cur = np.concatenate([a.ravel() for a in m_cur.weight_arrays()])
    lo = min(float(ref.min()), float(cur.min()))
    hi = max(float(ref.max()), float(cur.max()))
    if hi - lo < 1e-15:
        return 0.0
    h_ref, _ = np.histogram(ref, bins=bins, range=(lo, hi))
    h_cur, _ = np.histogram(cur, bins=bins, range=(lo, hi))
    p = h_ref.astype(float) + 1e-9
    q = h_cur.astype(float) + 1e-9
    return histogram_kl(p / p.sum(), q / q.sum())


def split_records(n: int, fractions, rng: np.random.Generator):
    """Shuffled train/val/test index split (floor train, floor val, rest test)."""
    perm = rng.permutation(n)
    n_train = int(math.floor(fractions[0] * n))
    n_val = int(math.floor(fractions[1] * n))
    if n_train < 1 or n_val < 1 or n - n_train - n_val < 1:
        raise ValueError("dataset too small to split")
    return (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])


def run_stage(m_current: NetworkModel, x_train: np.ndarray, y_train: np.ndarray,
              val_records, cfg: SmuConfig) -> SnapshotPool:
    """Train a stand-alone copy for one stage, snapshotting into a pool.

    The stand-alone model starts from the current model's weights; a snapshot
    is taken every ``snapshot_every`` iterations and scored on the validation
    split with the configured metric.
    """
    pool = SnapshotPool(capacity=cfg.iterations_per_stage // cfg.snapshot_every)
    m = m_current
    for it in range(1, cfg.iterations_per_stage + 1):
        m, _ = train_step(m, x_train, y_train, cfg.learning_rate)
        if it % cfg.snapshot_every == 0:
            if cfg.metric == "smupe":
                score = rms_error(m, val_records)
            else:
                score = accuracy(m, val_records)
            pool.append(Snapshot(it, m, score))
    return pool


def select_update(pool: SnapshotPool, metric: str, epsilon: float,
                  rng: np.random.Generator):
    """Pick the stage's candidate: random with probability epsilon, else best.

    Best is max score for smupa/smuwt, min for smupe; ties go to the earliest
    iteration.  Returns (snapshot, provenance).
    """
    if len(pool) == 0:
        raise ValueError("snapshot pool is empty")
    if rng.random() < epsilon:
        idx = int(rng.integers(len(pool)))
        return pool.entries[idx], PROVENANCE_RANDOM
    scores = np.asarray([s.score for s in pool.entries])
    idx = int(np.argmin(scores)) if metric == "smupe" else int(np.argmax(scores))
    return pool.entries[idx], PROVENANCE_BEST


def _prepare_run(records, cfg: SmuConfig, initial_model):
    raw = np.asarray([r.features for r in records], dtype=float)
    train_idx, val_idx, test_idx = split_records(len(records), cfg.split,
                                                 substream(cfg.seed, "split"))
    scaler = FeatureScaler.fit(raw[train_idx])
    x_train = scaler.transform(raw[train_idx])
    y_train = np.asarray([records[i].rank for i in train_idx], dtype=float)
    val_records = [records[i] for i in val_idx]
    n_in = raw.shape[1]
    n_out = y_train.shape[1]
    if initial_model is None:
        m = init_network((n_in, cfg.hidden_units, n_out), substream(cfg.seed, "init"))
    else:
        m = initial_model
    m = with_scaler(m, scaler)
    splits = {"train": train_idx.tolist(), "val": val_idx.tolist(), "test": test_idx.tolist()}
    return m, x_train, y_train, val_records, splits


def train_smu(records, cfg: SmuConfig,
              initial_model: NetworkModel | None = None) -> TrainingCurve:
    """Run the full stagewise training chain.

    The validation split is fixed across stages (the rollback guard needs a
    stable yardstick).  The input scaler is fitted on the training split and
    attached to the model, replacing any scaler a warm-start model carried.
    Only the smuwt metric applies the rollback guard, and not before stage 2
    (it needs a reference model for the weight KL).
    """
    records = list(records)
    m, x_train, y_train, val_records, splits = _prepare_run(records, cfg, initial_model)
    safe_acc = accuracy(m, val_records)
    curve = []
    total_steps = 0
    for stage in range(1, cfg.stages + 1):
        pool = run_stage(m, x_train, y_train, val_records, cfg)
        total_steps += cfg.iterations_per_stage
        snap, provenance = select_update(pool, cfg.metric, cfg.epsilon,
                                         substream(cfg.seed, "stage", stage))
        kl = math.nan
        if cfg.metric == "smuwt":
            kl = weight_kl(m, snap.model, cfg.kl_bins)
            cand_acc = snap.score  # smuwt pools are scored with accuracy
            if stage > 1 and (kl > cfg.kl_threshold or cand_acc < safe_acc):
                provenance = PROVENANCE_ROLLBACK
            else:
                m = snap.model
                safe_acc = cand_acc
        else:
            m = snap.model
            safe_acc = accuracy(m, val_records)
        curve.append(StageRecord(stage, safe_acc, provenance, kl))
    return TrainingCurve(curve, m, total_steps, splits)


def train_baseline(records, cfg: SmuConfig) -> TrainingCurve:
    """Conventional continuous training with the same total step budget.

    The 70/15/15 split is resampled every stage; the scaler comes from the
    first stage's training split so the input space stays fixed.
    """
    records = list(records)
    raw = np.asarray([r.features for r in records], dtype=float)
    m = None
    scaler = None
    curve = []
    total_steps = 0
    for stage in range(1, cfg.stages + 1):
        rng = substream(cfg.seed, "baseline-split", stage)
        train_idx, val_idx, _ = split_records(len(records), cfg.split, rng)
        if stage == 1:
            scaler = FeatureScaler.fit(raw[train_idx])
            m = init_network((raw.shape[1], cfg.hidden_units,
                              records[0].rank.shape[0]),
                             substream(cfg.seed, "init"), scaler=scaler)
        x_train = scaler.transform(raw[train_idx])
        y_train = np.asarray([records[i].rank for i in train_idx], dtype=float)
        for _ in range(cfg.iterations_per_stage):
            m, _ = train_step(m, x_train, y_train, cfg.learning_rate)
        total_steps += cfg.iterations_per_stage
        acc = accuracy(m, [records[i] for i in val_idx])
        curve.append(StageRecord(stage, acc, PROVENANCE_BASELINE, math.nan))
    return TrainingCurve(curve, m, total_steps)


def stability_metrics(curve) -> tuple[float, float]:
    """(variance from the second point on, cumulative degradation).

    Variance is the population variance of the curve without its first point;
    degradation sums every stage-to-stage accuracy decrease over the whole
    curve.
    """
    if isinstance(curve, TrainingCurve):
        pts = curve.accuracies
    else:
        pts = np.asarray(curve, dtype=float)
    sigma2 = float(np.var(pts[1:])) if pts.shape[0] >= 2 else 0.0
    drops = np.maximum(0.0, pts[:-1] - pts[1:])
    return sigma2, float(np.sum(drops))
