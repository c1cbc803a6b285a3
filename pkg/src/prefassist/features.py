"""Interpretation layer: strategy outputs -> preference-related features.

Four features per strategy, in fixed order:

  o1  intent alignment error      0.5*sum_b (p_b(R) - T_b)^2
  o2  weighted kinematic deviation  sum_a (R_a - H_a)^2 / lambda_a
  o3  joint deviation               sum over joints (rho - phi)^2
  o4  fingertip deviation           sum_i ||X_i - Y_i||^2

The network input is the concatenation over the three strategies in the
canonical order (intent, mimic, hybrid), standardized per component with
statistics fitted on the training split.  Both robot hands produce the same
input dimensionality, which is what makes cross-robot transfer possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hands import GraspVector, TaskLabel, fingertip_fk, map_human_to_robot
from .strategies import DivergenceProfile, StrategyOutput

STRATEGY_ORDER = ("intent", "mimic", "hybrid")
FEATURES_PER_STRATEGY = 4
INPUT_DIM = FEATURES_PER_STRATEGY * len(STRATEGY_ORDER)
_SD_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Per-component z-score standardization with frozen statistics."""

    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float, order="C")
        sd = np.maximum(np.array(self.sd, dtype=float, order="C"), _SD_FLOOR)
        mean.setflags(write=False)
        sd.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)

    @classmethod
    def fit(cls, rows: np.ndarray) -> "FeatureScaler":
        rows = np.asarray(rows, dtype=float)
        return cls(rows.mean(axis=0), rows.std(axis=0, ddof=0))

    @classmethod
    def identity(cls, dim: int = INPUT_DIM) -> "FeatureScaler":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=float) - self.mean) / self.sd

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureScaler":
        return cls(np.asarray(doc["mean"]), np.asarray(doc["sd"]))


@dataclass(frozen=True, eq=False)
class PreferenceFeatureVector:
    """The four features of one strategy's grasp."""

    strategy: str
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, order="C")
        if arr.shape != (FEATURES_PER_STRATEGY,):
            raise ValueError("expected 4 feature components")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise ValueError("features must be finite and non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True, eq=False)
class TrialFeatures:
    """All strategies' features for one command, plus the network input."""

    command_id: str
    task: TaskLabel
    robot: str
    per_strategy: dict      # strategy id -> PreferenceFeatureVector
    x: np.ndarray           # concatenated (and possibly standardized) input

    def __post_init__(self):
        arr = np.array(self.x, dtype=float, order="C")
        if arr.shape != (INPUT_DIM,):
            raise ValueError(f"network input must have length {INPUT_DIM}")
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)

    def raw_feature(self, strategy: str) -> np.ndarray:
        return self.per_strategy[strategy].values


def feature_o1(posterior_vec: np.ndarray, intent_vec: np.ndarray) -> float:
    """Intent alignment error."""
    p = np.asarray(posterior_vec, dtype=float)
    t = np.asarray(intent_vec, dtype=float)
    if p.shape != t.shape:
        raise ValueError("posterior and intent lengths differ")
    return 0.5 * float(np.sum((p - t) ** 2))


def feature_o2(robot_values, human_values, profile: DivergenceProfile) -> float:
    """Divergence-weighted kinematic deviation over all attributes."""
    r = robot_values.values if isinstance(robot_values, GraspVector) else np.asarray(robot_values, dtype=float)
    h = human_values.values if isinstance(human_values, GraspVector) else np.asarray(human_values, dtype=float)
    if r.shape != h.shape or r.shape != profile.lam.shape:
        raise ValueError("attribute dimensions differ")
    return float(np.sum((r - h) ** 2 / profile.lam))


def feature_o3(robot: GraspVector, human_mapped: GraspVector) -> float:
    """Squared joint deviation; palm attributes excluded."""
    if robot.schema.dim != human_mapped.schema.dim:
        raise ValueError("grasps must share a schema")
    diff = robot.joints - human_mapped.joints
    return float(np.sum(diff ** 2))


def feature_o4(robot: GraspVector, human: GraspVector) -> float:
    """Squared fingertip deviation over mapped finger pairs.

    For a 2-finger robot the human reference tips are the thumb tip and the
    midpoint of the index and middle tips, consistent with the joint mapping.
    """
    tips_r = fingertip_fk(robot).positions
    tips_h = fingertip_fk(human).positions
    if robot.schema.finger_count == human.schema.finger_count:
        ref = tips_h
    elif robot.schema.finger_count == 2 and human.schema.finger_count == 3:
        ref = np.stack([tips_h[0], 0.5 * (tips_h[1] + tips_h[2])])
    else:
        raise ValueError("unsupported finger pairing")
    return float(np.sum((tips_r - ref) ** 2))


def featurize(command_id: str, task: TaskLabel, command: GraspVector,
              intent_vec: np.ndarray, outputs, profile: DivergenceProfile,
              scaler: FeatureScaler | None = None) -> TrialFeatures:
    """Interpret the three strategy outputs of one command.

    ``outputs`` must contain exactly the canonical strategies in order.
    Raw features are concatenated and standardized when a scaler is given.
    """
    if len(outputs) != len(STRATEGY_ORDER):
        raise ValueError("expected one output per strategy")
    ids = tuple(o.strategy for o in outputs)
    if ids != STRATEGY_ORDER:
        raise ValueError(f"strategy outputs must be {STRATEGY_ORDER}, got {ids}")
    robot_schema = outputs[0].grasp.schema
    h_mapped = map_human_to_robot(command, robot_schema)

    per_strategy = {}
    raw = np.empty(INPUT_DIM)
    for k, out in enumerate(outputs):
        vals = np.array([
            feature_o1(out.posterior, intent_vec),
            feature_o2(out.grasp, h_mapped, profile),
            feature_o3(out.grasp, h_mapped),
            feature_o4(out.grasp, command),
        ])
        per_strategy[out.strategy] = PreferenceFeatureVector(out.strategy, vals)
        raw[k * FEATURES_PER_STRATEGY:(k + 1) * FEATURES_PER_STRATEGY] = vals

    x = scaler.transform(raw) if scaler is not None else raw
    return TrialFeatures(command_id, task, robot_schema.name, per_strategy, x)
