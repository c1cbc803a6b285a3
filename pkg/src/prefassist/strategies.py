"""The three control strategies and the divergence profile feeding them.

* intent strategy - drive the robot posterior toward the inferred human
  intent, ignoring the command's pose (multi-start projected gradient).
* mimic strategy  - follow the mapped command exactly; the equality
  constraint composed with the bounds reduces to feasibility projection,
  so it is solved analytically.
* hybrid strategy - intent objective plus an elastic per-attribute penalty
  for deviating from the mapped command, weighted by how divergent robot
  and human attribute distributions are.

Targets may be a HandSchema or a bare FeasibleSpace (used by low-dimensional
solver tests); outputs carry a GraspVector for schema targets and a plain
vector otherwise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import backend
from .hands import (PALM_ORIENTATION, GraspVector, HandSchema,
                    map_human_to_robot, project_values)
from .intent import TaskGaussianLibrary, posterior
from .rngutil import as_generator

LAMBDA_MIN = 1e-3
_SD_FLOOR = 1e-6


class DegenerateDivergenceError(ArithmeticError):
    """Multivariate divergence is zero; the hybrid penalty weight is infinite."""


@dataclass(frozen=True, eq=False)
class FeasibleSpace:
    """Box bounds plus an optional unit-norm block."""

    lower: np.ndarray
    upper: np.ndarray
    palm: slice | None = PALM_ORIENTATION

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float, order="C")
        upper = np.array(self.upper, dtype=float, order="C")
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("bounds must be matching vectors")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def palm_range(self) -> tuple[int, int]:
        if self.palm is None:
            return -1, -1
        return self.palm.start, self.palm.stop

    def project(self, x: np.ndarray) -> np.ndarray:
        return project_values(np.asarray(x, dtype=float), self.lower, self.upper, self.palm)


def space_of(target) -> FeasibleSpace:
    if isinstance(target, HandSchema):
        return FeasibleSpace(target.lower, target.upper, PALM_ORIENTATION)
    if isinstance(target, FeasibleSpace):
        return target
    raise TypeError("target must be a HandSchema or FeasibleSpace")


@dataclass(frozen=True, eq=False)
class DivergenceProfile:
    """Per-attribute and multivariate KL divergences, robot vs human."""

    lam: np.ndarray     # per-attribute divergence, clamped from below
    gamma: float        # multivariate divergence
    lam_min: float = LAMBDA_MIN

    def __post_init__(self):
        lam = np.maximum(np.array(self.lam, dtype=float, order="C"), self.lam_min)
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "gamma", max(float(self.gamma), 0.0))

    def penalty_coefficients(self) -> np.ndarray:
        """Per-attribute weights 1/(gamma*lambda_a) of the hybrid penalty."""
        if self.gamma <= 0.0:
            raise DegenerateDivergenceError("degenerate divergence")
        return 1.0 / (self.gamma * self.lam)

    def to_dict(self) -> dict:
        return {"lam": self.lam.tolist(), "gamma": self.gamma, "lam_min": self.lam_min}

    @classmethod
    def from_dict(cls, doc: dict) -> "DivergenceProfile":
        return cls(np.asarray(doc["lam"]), doc["gamma"], doc.get("lam_min", LAMBDA_MIN))


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 150
    step_size: float = 0.25
    num_starts: int = 8
    gradient_step: float = 1e-5
    tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if min(self.max_iterations, self.num_starts) < 1:
            raise ValueError("iteration and start counts must be positive")
        if min(self.step_size, self.gradient_step, self.tolerance) <= 0:
            raise ValueError("step sizes and tolerance must be positive")


@dataclass(frozen=True, eq=False)
class StrategyOutput:
    """A solved strategy: the grasp, its objective value, and its posterior."""

    strategy: str
    grasp: object            # GraspVector for schema targets, ndarray for spaces
    objective_value: float
    posterior: np.ndarray

    @property
    def values(self) -> np.ndarray:
        if isinstance(self.grasp, GraspVector):
            return self.grasp.values
        return self.grasp


def gaussian_kl_1d(mu_p: float, sigma_p: float, mu_q: float, sigma_q: float) -> float:
    """KL(N(mu_p, sigma_p^2) || N(mu_q, sigma_q^2)) for univariate Gaussians."""
    return (np.log(sigma_q / sigma_p)
            + (sigma_p ** 2 + (mu_p - mu_q) ** 2) / (2.0 * sigma_q ** 2) - 0.5)


def gaussian_kl_mv(mu_p, cov_p, mu_q, cov_q) -> float:
    """KL(N_p || N_q) for multivariate Gaussians."""
    mu_p = np.asarray(mu_p, dtype=float)
    mu_q = np.asarray(mu_q, dtype=float)
    cov_p = np.asarray(cov_p, dtype=float)
    cov_q = np.asarray(cov_q, dtype=float)
    k = mu_p.shape[0]
    inv_q = np.linalg.inv(cov_q)
    diff = mu_q - mu_p
    _, logdet_p = np.linalg.slogdet(cov_p)
    _, logdet_q = np.linalg.slogdet(cov_q)
    return 0.5 * (float(np.trace(inv_q @ cov_p)) + float(diff @ inv_q @ diff)
                  - k + logdet_q - logdet_p)


def divergence_profile(robot_samples, human_samples, lam_min: float = LAMBDA_MIN,
                       reg_delta: float = 1e-6) -> DivergenceProfile:
    """Fit per-attribute and multivariate divergences from two sample sets.

    Both sample sets must live in the same (robot) attribute space; human
    samples are mapped there beforehand.  Zero-variance attributes have their
    standard deviation clamped to 1e-6 (with a warning) so the divergence
    stays defined.
    """
    r = _sample_matrix(robot_samples)
    h = _sample_matrix(human_samples)
    if r.shape[0] < 2 or h.shape[0] < 2:
        raise ValueError("need at least 2 samples per population")
    if r.shape[1] != h.shape[1]:
        raise ValueError("populations must share the attribute space")

    mu_r, mu_h = r.mean(axis=0), h.mean(axis=0)
    sd_r = r.std(axis=0, ddof=1)
    sd_h = h.std(axis=0, ddof=1)
    if np.any(sd_h < _SD_FLOOR) or np.any(sd_r < _SD_FLOOR):
        warnings.warn("zero-variance attribute in divergence populations; clamping sd")
        sd_r = np.maximum(sd_r, _SD_FLOOR)
        sd_h = np.maximum(sd_h, _SD_FLOOR)
    lam = gaussian_kl_1d(mu_r, sd_r, mu_h, sd_h)

    d = r.shape[1]
    cov_r = np.cov(r, rowvar=False, ddof=1).reshape(d, d) + reg_delta * np.eye(d)
    cov_h = np.cov(h, rowvar=False, ddof=1).reshape(d, d) + reg_delta * np.eye(d)
    gamma = gaussian_kl_mv(mu_r, cov_r, mu_h, cov_h)
    return DivergenceProfile(lam, gamma, lam_min)


def _sample_matrix(samples) -> np.ndarray:
    if len(samples) and isinstance(samples[0], GraspVector):
        return np.asarray([g.values for g in samples], dtype=float)
    return np.asarray(samples, dtype=float)


def strategy_objective(x, lib: TaskGaussianLibrary, target: np.ndarray,
                       href: np.ndarray | None = None,
                       pen: np.ndarray | None = None) -> float:
    """Objective shared by the strategies, evaluated outside the kernels.

    0.5*sum_b (p_b(x) - target_b)^2, plus sum_a pen_a*(x_a - href_a)^2 when a
    penalty is given.  Used to report objective values and as the reference
    the solvers are checked against.
    """
    vec = x.values if isinstance(x, GraspVector) else np.asarray(x, dtype=float)
    p = posterior(vec, lib)
    val = 0.5 * float(np.sum((p - target) ** 2))
    if pen is not None:
        dev = vec - href
        val += float((dev * dev) @ pen)
    return val


def _require_simplex(t: np.ndarray, num_tasks: int):
    t = np.asarray(t, dtype=float)
    if t.shape != (num_tasks,) or np.any(t < -1e-12) or abs(float(t.sum()) - 1.0) > 1e-9:
        raise ValueError("intent must be a probability vector over tasks")
    return t


def _random_feasible(space: FeasibleSpace, rng: np.random.Generator) -> np.ndarray:
    return space.project(rng.uniform(space.lower, space.upper))


def _assemble_starts(space: FeasibleSpace, deterministic, cfg: SolverConfig) -> np.ndarray:
    starts = [space.project(np.asarray(s, dtype=float)) for s in deterministic]
    rng = as_generator(cfg.seed)
    while len(starts) < cfg.num_starts:
        starts.append(_random_feasible(space, rng))
    return np.ascontiguousarray(np.asarray(starts, dtype=float))


def _minimize(space: FeasibleSpace, lib: TaskGaussianLibrary, target: np.ndarray,
              href: np.ndarray | None, pen: np.ndarray | None,
              starts: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    palm_lo, palm_hi = space.palm_range
    dim = space.dim
    href_arr = np.zeros(dim) if href is None else np.ascontiguousarray(href, dtype=float)
    pen_arr = np.zeros(dim) if pen is None else np.ascontiguousarray(pen, dtype=float)
    means, inv_covs, log_norms, log_priors = lib.pack()
    x, _ = backend.pgd_minimize(
        starts, space.lower, space.upper, palm_lo, palm_hi,
        means, inv_covs, log_norms, log_priors,
        np.ascontiguousarray(target, dtype=float), href_arr, pen_arr,
        cfg.max_iterations, cfg.step_size, cfg.gradient_step, cfg.tolerance)
    return np.asarray(x)


def _wrap_output(strategy: str, x: np.ndarray, target_obj, lib, intent_vec,
                 href=None, pen=None) -> StrategyOutput:
    if isinstance(target_obj, HandSchema):
        grasp = GraspVector(target_obj, x)
    else:
        grasp = x
    return StrategyOutput(strategy, grasp,
                          strategy_objective(x, lib, intent_vec, href, pen),
                          posterior(x, lib))


def solve_mimic(h: GraspVector, target: HandSchema, robot_lib: TaskGaussianLibrary,
                intent_vec: np.ndarray) -> StrategyOutput:
    """Follow-the-command strategy: projection of the mapped command.

    The equality constraint plus bounds has the projection as its unique
    feasible point, so no iteration is involved.  The reported objective is
    the intent objective evaluated there.
    """
    t = _require_simplex(intent_vec, robot_lib.num_tasks)
    mapped = map_human_to_robot(h, target)
    return StrategyOutput("mimic", mapped,
                          strategy_objective(mapped, robot_lib, t),
                          posterior(mapped, robot_lib))


def solve_intent(intent_vec: np.ndarray, target, robot_lib: TaskGaussianLibrary,
                 cfg: SolverConfig, command: GraspVector | None = None,
                 extra_starts=()) -> StrategyOutput:
    """Minimize the intent objective over the feasible set.

    Starts from the projected mapped command (when given), any extra starts,
    and seeded random feasible points, up to ``cfg.num_starts`` total; the
    best final iterate wins, so the solution is never worse than any start.
    """
    space = space_of(target)
    t = _require_simplex(intent_vec, robot_lib.num_tasks)
    det = []
    if command is not None:
        mapped = map_human_to_robot(command, target) if isinstance(target, HandSchema) else command
        det.append(mapped.values if isinstance(mapped, GraspVector) else mapped)
    det.extend(np.asarray(s, dtype=float) for s in extra_starts)
    starts = _assemble_starts(space, det, cfg)
    x = _minimize(space, robot_lib, t, None, None, starts, cfg)
    return _wrap_output("intent", x, target, robot_lib, t)


def solve_hybrid(intent_vec: np.ndarray, h, profile: DivergenceProfile, target,
                 robot_lib: TaskGaussianLibrary, cfg: SolverConfig,
                 extra_starts=()) -> StrategyOutput:
    """Intent objective plus the elastic stay-near-the-command penalty.

    ``h`` is the human command (GraspVector) for schema targets, or a vector
    already in the target space.  The mimic solution is always included as a
    start; pass the intent solution via ``extra_starts`` to guarantee the
    hybrid result is at least as good as both.
    """
    space = space_of(target)
    t = _require_simplex(intent_vec, robot_lib.num_tasks)
    pen = profile.penalty_coefficients()  # raises when gamma == 0
    if isinstance(target, HandSchema):
        href = map_human_to_robot(h, target).values
    else:
        href = space.project(np.asarray(h, dtype=float))
    det = [href]
    det.extend(np.asarray(s, dtype=float) for s in extra_starts)
    starts = _assemble_starts(space, det, cfg)
    x = _minimize(space, robot_lib, t, href, pen, starts, cfg)
    return _wrap_output("hybrid", x, target, robot_lib, t, href, pen)
