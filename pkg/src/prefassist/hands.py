"""Hand schemas, grasp vectors, feasibility projection, finger mapping, and
fingertip forward kinematics.

Attribute layout shared by every schema:

  [0:3]   palm_orientation - unit 3-vector (pointing direction of the palm)
  [3:6]   palm_center      - meters
  [6:]    finger joints    - radians, ``joints_per_finger`` per finger

The human command hand tracks 3 fingers in the order thumb, index, middle.
Robot hands have 2 or 3 fingers; finger 1 always receives the thumb.  Fingers
are planar two-link chains in the palm-local x-y plane, with fixed per-schema
base offsets; the palm frame is an orthonormal completion of the orientation
vector (x-axis = orientation), so orientation (1, 0, 0) is the identity frame.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rngutil import as_generator

PALM_ORIENTATION = slice(0, 3)
PALM_CENTER = slice(3, 6)
HUMAN_FINGER_NAMES = ("thumb", "index", "middle")
TASK_COUNT = 3

_UNIT_EPS = 1e-12


class DegenerateOrientationError(ValueError):
    """Palm orientation collapsed to zero; the grasp is ill-posed."""


class TaskLabel(Enum):
    """The three principle manipulation tasks."""

    USE = "use"
    MOVE = "move"
    HAND_OVER = "handover"

    @property
    def index(self) -> int:
        return _TASK_ORDER.index(self)


_TASK_ORDER = (TaskLabel.USE, TaskLabel.MOVE, TaskLabel.HAND_OVER)


@dataclass(frozen=True, eq=False)
class HandSchema:
    """Attribute layout, bounds, and link geometry of one hand."""

    name: str
    finger_count: int
    joints_per_finger: int
    link_lengths: np.ndarray          # (finger_count, joints_per_finger), m
    finger_base_offsets: np.ndarray   # (finger_count, 3), palm-local, m
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        for field in ("link_lengths", "finger_base_offsets", "lower", "upper"):
            arr = np.array(getattr(self, field), dtype=float, order="C")
            arr.setflags(write=False)
            object.__setattr__(self, field, arr)
        if self.finger_count < 1:
            raise ValueError("finger_count must be >= 1")
        if self.link_lengths.shape != (self.finger_count, self.joints_per_finger):
            raise ValueError("link_lengths shape mismatch")
        if self.finger_base_offsets.shape != (self.finger_count, 3):
            raise ValueError("finger_base_offsets shape mismatch")
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise ValueError("bounds must have schema dimension")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return 6 + self.finger_count * self.joints_per_finger

    @property
    def attribute_layout(self) -> list[tuple[str, slice]]:
        layout = [("palm_orientation", PALM_ORIENTATION), ("palm_center", PALM_CENTER)]
        for i in range(self.finger_count):
            layout.append((f"finger{i + 1}_joints", self.joint_slice(i)))
        return layout

    @property
    def joints(self) -> slice:
        """All joint attributes (palm excluded)."""
        return slice(6, self.dim)

    def joint_slice(self, finger: int) -> slice:
        start = 6 + finger * self.joints_per_finger
        return slice(start, start + self.joints_per_finger)

    @property
    def fingerprint(self) -> str:
        """Stable short hash of the schema definition."""
        doc = {
            "name": self.name,
            "finger_count": self.finger_count,
            "joints_per_finger": self.joints_per_finger,
            "link_lengths": self.link_lengths.tolist(),
            "finger_base_offsets": self.finger_base_offsets.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }
        blob = json.dumps(doc, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


def make_schema(name: str,
                finger_count: int,
                joints_per_finger: int = 2,
                link_lengths=None,
                joint_bounds=(0.0, math.pi / 2),
                palm_center_bounds=(-0.5, 0.5),
                orientation_bounds=(-1.0, 1.0),
                finger_base_offsets=None) -> HandSchema:
    """Build a schema from compact geometry and bound settings."""
    if link_lengths is None:
        link_lengths = [[0.05, 0.04][:joints_per_finger] + [0.03] * max(0, joints_per_finger - 2)
                        for _ in range(finger_count)]
    if finger_base_offsets is None:
        ys = [(i - (finger_count - 1) / 2.0) * 0.03 for i in range(finger_count)]
        finger_base_offsets = [[0.02, y, 0.0] for y in ys]
    dim = 6 + finger_count * joints_per_finger
    lower = np.empty(dim)
    upper = np.empty(dim)
    lower[PALM_ORIENTATION], upper[PALM_ORIENTATION] = orientation_bounds
    lower[PALM_CENTER], upper[PALM_CENTER] = palm_center_bounds
    lower[6:], upper[6:] = joint_bounds
    return HandSchema(name, finger_count, joints_per_finger,
                      np.asarray(link_lengths, dtype=float),
                      np.asarray(finger_base_offsets, dtype=float),
                      lower, upper)


@dataclass(frozen=True, eq=False)
class GraspVector:
    """One concrete hand configuration under a schema."""

    schema: HandSchema
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, order="C")
        if arr.shape != (self.schema.dim,):
            raise ValueError(
                f"grasp has {arr.shape} values, schema {self.schema.name} needs {self.schema.dim}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def palm_orientation(self) -> np.ndarray:
        return self.values[PALM_ORIENTATION]

    @property
    def palm_center(self) -> np.ndarray:
        return self.values[PALM_CENTER]

    @property
    def joints(self) -> np.ndarray:
        return self.values[self.schema.joints]

    def finger_joints(self, finger: int) -> np.ndarray:
        return self.values[self.schema.joint_slice(finger)]

    def with_values(self, values) -> "GraspVector":
        return GraspVector(self.schema, values)


@dataclass(frozen=True, eq=False)
class FingertipSet:
    """World-frame fingertip positions, one row per finger."""

    positions: np.ndarray  # (finger_count, 3), m

    def __post_init__(self):
        arr = np.array(self.positions, dtype=float, order="C")
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError("positions must be (finger_count, 3)")
        arr.setflags(write=False)
        object.__setattr__(self, "positions", arr)


def project_values(values: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                   palm: slice | None = PALM_ORIENTATION) -> np.ndarray:
    """Clamp into the box, then renormalize the palm block to unit length.

    A block that is already unit within 1e-12 is left bitwise untouched,
    which makes the projection exactly idempotent.
    """
    out = np.clip(values, lower, upper)
    if palm is not None:
        block = out[palm]
        norm = float(np.linalg.norm(block))
        if norm < _UNIT_EPS:
            raise DegenerateOrientationError("degenerate orientation")
        if abs(norm - 1.0) > _UNIT_EPS:
            out[palm] = block / norm
    return out


def project_to_feasible(g: GraspVector) -> GraspVector:
    """Project a grasp onto its schema's feasible set (bounds + unit palm)."""
    return g.with_values(project_values(g.values, g.schema.lower, g.schema.upper))


def map_human_to_robot(h: GraspVector, target: HandSchema) -> GraspVector:
    """Map a human command onto a robot schema and project to feasibility.

    Palm block is copied.  A 3-finger robot receives thumb/index/middle in
    order; a 2-finger robot receives the thumb on finger 1 and the joint-wise
    mean of index and middle on finger 2.
    """
    src = h.schema
    if src.finger_count != 3:
        raise ValueError("human commands must use the 3-tracked-finger schema")
    if src.joints_per_finger != target.joints_per_finger:
        raise ValueError("joints_per_finger mismatch between schemas")
    values = np.empty(target.dim)
    values[:6] = h.values[:6]
    if target.finger_count == 3:
        values[6:] = h.values[6:]
    elif target.finger_count == 2:
        values[target.joint_slice(0)] = h.finger_joints(0)
        values[target.joint_slice(1)] = 0.5 * (h.finger_joints(1) + h.finger_joints(2))
    else:
        raise ValueError(f"unsupported target finger count {target.finger_count}")
    return project_to_feasible(GraspVector(target, values))


def orientation_frame(orientation: np.ndarray) -> np.ndarray:
    """Right-handed frame whose x-axis is the palm orientation.

    The remaining axes come from a deterministic orthonormal completion
    against world z (or world y when the orientation is nearly vertical).
    """
    u = np.asarray(orientation, dtype=float)
    norm = float(np.linalg.norm(u))
    if norm < _UNIT_EPS:
        raise DegenerateOrientationError("degenerate orientation")
    u = u / norm
    helper = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    v = np.cross(helper, u)
    v /= np.linalg.norm(v)
    w = np.cross(u, v)
    return np.column_stack([u, v, w])


def fingertip_fk(g: GraspVector) -> FingertipSet:
    """Fingertip positions for a feasible grasp.

    Each finger is a planar chain in the palm x-y plane starting at its base
    offset; the palm frame is then placed at palm_center with orientation_frame.
    """
    schema = g.schema
    rot = orientation_frame(g.palm_orientation)
    center = g.palm_center
    tips = np.empty((schema.finger_count, 3))
    for i in range(schema.finger_count):
        angles = np.cumsum(g.finger_joints(i))
        lengths = schema.link_lengths[i]
        local = schema.finger_base_offsets[i] + np.array([
            float(np.sum(lengths * np.cos(angles))),
            float(np.sum(lengths * np.sin(angles))),
            0.0,
        ])
        tips[i] = center + rot @ local
    return FingertipSet(tips)


@dataclass(frozen=True, eq=False)
class CommandSampler:
    """Per-task diagonal Gaussians over a schema's attribute space."""

    schema: HandSchema
    means: dict
    sds: dict

    def __post_init__(self):
        for task, mean in self.means.items():
            if np.asarray(mean).shape != (self.schema.dim,):
                raise ValueError(f"mean for {task} has wrong dimension")
        for task, sd in self.sds.items():
            if np.asarray(sd).shape != (self.schema.dim,):
                raise ValueError(f"sd for {task} has wrong dimension")


def generate_command_set(sampler: CommandSampler, task: TaskLabel, count: int,
                         seed) -> list[GraspVector]:
    """Sample ``count`` feasibility-projected commands for one task."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if task not in sampler.means:
        raise ValueError(f"unknown task {task}")
    rng = as_generator(seed)
    mean = np.asarray(sampler.means[task], dtype=float)
    sd = np.asarray(sampler.sds[task], dtype=float)
    draws = mean + sd * rng.standard_normal((count, sampler.schema.dim))
    return [project_to_feasible(GraspVector(sampler.schema, row)) for row in draws]
