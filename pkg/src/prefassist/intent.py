"""Per-task Gaussian models: fitting, exact densities, and task posteriors.

One library holds a full-covariance Gaussian per task plus task priors, for
one side of the interaction (the human command hand or one robot hand).  The
human-side posterior doubles as the intent model producing the target vector
the strategies chase; robot-side posteriors quantify how well a robot pose
satisfies each task.

Posteriors are evaluated in log space with max subtraction; the direct-space
formula underflows for grasps far from all task modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hands import GraspVector

REG_DELTA = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


class PosteriorUnderflowError(ArithmeticError):
    """Every task assigns the query zero likelihood; posterior undefined."""


def _as_vector(g) -> np.ndarray:
    if isinstance(g, GraspVector):
        return g.values
    return np.ascontiguousarray(np.asarray(g, dtype=float))


@dataclass(frozen=True, eq=False)
class TaskGaussianLibrary:
    """Per-task Gaussians (mean, covariance) with priors, for one side."""

    side: str
    means: np.ndarray        # (num_tasks, dim)
    covariances: np.ndarray  # (num_tasks, dim, dim)
    priors: np.ndarray       # (num_tasks,)
    task_names: tuple = ()

    def __post_init__(self):
        means = np.array(self.means, dtype=float, order="C")
        covs = np.array(self.covariances, dtype=float, order="C")
        priors = np.array(self.priors, dtype=float, order="C")
        if means.ndim != 2:
            raise ValueError("means must be (num_tasks, dim)")
        b, d = means.shape
        if covs.shape != (b, d, d):
            raise ValueError("covariances must be (num_tasks, dim, dim)")
        if priors.shape != (b,):
            raise ValueError("priors must have one entry per task")
        if np.any(priors < 0) or abs(float(priors.sum()) - 1.0) > 1e-9:
            raise ValueError("priors must be non-negative and sum to 1")
        if not np.allclose(covs, np.swapaxes(covs, 1, 2), atol=1e-12):
            raise ValueError("covariances must be symmetric")

        inv_covs = np.empty_like(covs)
        log_norms = np.empty(b)
        for i in range(b):
            chol = np.linalg.cholesky(covs[i])  # raises if not PD
            log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
            inv_covs[i] = np.linalg.inv(covs[i])
            log_norms[i] = -0.5 * (d * _LOG_2PI + log_det)
        with np.errstate(divide="ignore"):
            log_priors = np.where(priors > 0.0, np.log(np.maximum(priors, 1e-300)), -np.inf)

        for name, arr in (("means", means), ("covariances", covs), ("priors", priors),
                          ("inv_covs", inv_covs), ("log_norms", log_norms),
                          ("log_priors", np.ascontiguousarray(log_priors))):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    inv_covs: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    log_norms: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    log_priors: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    @property
    def num_tasks(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def pack(self):
        """Kernel-ready arrays (means, inv_covs, log_norms, log_priors)."""
        return self.means, self.inv_covs, self.log_norms, self.log_priors

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "task_names": list(self.task_names),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "priors": self.priors.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskGaussianLibrary":
        return cls(doc["side"], np.asarray(doc["means"]), np.asarray(doc["covariances"]),
                   np.asarray(doc["priors"]), tuple(doc.get("task_names", ())))


def fit_library(samples_per_task, side: str = "", priors=None,
                task_names: tuple = (), delta: float = REG_DELTA) -> TaskGaussianLibrary:
    """Fit per-task Gaussians from samples (GraspVectors or row matrices).

    Mean is the sample mean; covariance is the n-1 sample covariance plus
    ``delta`` on the diagonal so the library stays invertible even for
    degenerate sample sets.  Priors default to uniform.
    """
    matrices = []
    for samples in samples_per_task:
        if len(samples) < 2:
            raise ValueError("need at least 2 samples per task")
        if isinstance(samples[0], GraspVector):
            mat = np.asarray([g.values for g in samples], dtype=float)
        else:
            mat = np.asarray(samples, dtype=float)
        matrices.append(mat)
    dims = {m.shape[1] for m in matrices}
    if len(dims) != 1:
        raise ValueError("all tasks must share one attribute dimension")
    d = dims.pop()
    b = len(matrices)
    means = np.empty((b, d))
    covs = np.empty((b, d, d))
    for i, mat in enumerate(matrices):
        means[i] = mat.mean(axis=0)
        covs[i] = np.cov(mat, rowvar=False, ddof=1).reshape(d, d) + delta * np.eye(d)
    if priors is None:
        priors = np.full(b, 1.0 / b)
    return TaskGaussianLibrary(side, means, covs, np.asarray(priors, dtype=float),
                               tuple(task_names))


def likelihood(g, task_index: int, lib: TaskGaussianLibrary) -> float:
    """Exact multivariate normal density of the grasp under one task model."""
    x = _as_vector(g)
    if x.shape != (lib.dim,):
        raise ValueError(f"dimension mismatch: grasp {x.shape}, library dim {lib.dim}")
    diff = x - lib.means[task_index]
    quad = float(diff @ lib.inv_covs[task_index] @ diff)
    return float(math.exp(lib.log_norms[task_index] - 0.5 * quad))


def log_posterior(g, lib: TaskGaussianLibrary) -> np.ndarray:
    """Unnormalized log posterior (log prior + log likelihood) per task."""
    x = _as_vector(g)
    if x.shape != (lib.dim,):
        raise ValueError(f"dimension mismatch: grasp {x.shape}, library dim {lib.dim}")
    diffs = x - lib.means
    quads = np.einsum("bi,bij,bj->b", diffs, lib.inv_covs, diffs)
    return lib.log_priors + lib.log_norms - 0.5 * quads


def posterior(g, lib: TaskGaussianLibrary) -> np.ndarray:
    """Normalized task posterior; sums to 1.

    Raises PosteriorUnderflowError when no task assigns the grasp any mass
    (all log posteriors are -inf or non-finite).
    """
    logp = log_posterior(g, lib)
    m = float(np.max(logp))
    if not np.isfinite(m):
        raise PosteriorUnderflowError("posterior underflow")
    p = np.exp(logp - m)
    return p / p.sum()


def posterior_matrix(x: np.ndarray, lib: TaskGaussianLibrary) -> np.ndarray:
    """Batched posterior for rows of ``x`` via the active kernel backend."""
    from . import backend

    pts = np.ascontiguousarray(np.asarray(x, dtype=float))
    return backend.posterior_batch(pts, *lib.pack())


def infer_intent(h: GraspVector, human_lib: TaskGaussianLibrary) -> np.ndarray:
    """Task intent distribution for a human command."""
    if h.schema.finger_count != 3:
        raise ValueError("intent inference expects the tracked human hand")
    return posterior(h, human_lib)
