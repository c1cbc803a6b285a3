"""Pure-numpy implementations of the hot numeric kernels.

Reference semantics for the numba backend in ``_kernels_numba``; selected at
import time by ``prefassist.backend`` (``PREFASSIST_BACKEND=numpy``).  All
functions take plain float64 arrays and are deterministic.
"""

from __future__ import annotations

import numpy as np

_TINY = 1e-12


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, elementwise."""
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def nn_forward(w1, b1, w2, b2, x):
    """Batch forward pass: sigmoid hidden layer, linear output layer."""
    hidden = sigmoid(x @ w1 + b1)
    return hidden @ w2 + b2


def nn_train_step(w1, b1, w2, b2, x, y, lr):
    """One full-batch gradient step on mean-squared error.

    Returns updated copies of the parameters and the pre-step loss
    (mean over all n*out residual elements).
    """
    n = x.shape[0]
    z1 = x @ w1 + b1
    a1 = sigmoid(z1)
    raw = a1 @ w2 + b2
    diff = raw - y
    denom = float(n * raw.shape[1])
    loss = float(np.sum(diff * diff) / denom)

    d_raw = (2.0 / denom) * diff
    g_w2 = a1.T @ d_raw
    g_b2 = d_raw.sum(axis=0)
    d_a1 = d_raw @ w2.T
    d_z1 = d_a1 * a1 * (1.0 - a1)
    g_w1 = x.T @ d_z1
    g_b1 = d_z1.sum(axis=0)

    return (w1 - lr * g_w1, b1 - lr * g_b1, w2 - lr * g_w2, b2 - lr * g_b2, loss)


def posterior_batch(x, means, inv_covs, log_norms, log_priors):
    """Task posteriors for each row of ``x``, computed in log space.

    ``log_norms[b]`` is the log of the Gaussian normalization constant for
    task b; rows of the result sum to 1.
    """
    n = x.shape[0]
    num_tasks = means.shape[0]
    logp = np.empty((n, num_tasks))
    for b in range(num_tasks):
        diff = x - means[b]
        quad = np.einsum("ni,ij,nj->n", diff, inv_covs[b], diff)
        logp[:, b] = log_priors[b] + log_norms[b] - 0.5 * quad
    m = logp.max(axis=1, keepdims=True)
    p = np.exp(logp - m)
    return p / p.sum(axis=1, keepdims=True)


def project_box_palm(x, lower, upper, palm_lo, palm_hi):
    """Clamp to the box, then renormalize the unit-norm block if present.

    A block already unit within 1e-12 is left untouched, which makes the
    projection exactly idempotent.  An all-zero block after clamping is left
    as-is (callers validate feasibility of final outputs).
    """
    out = np.minimum(np.maximum(x, lower), upper)
    if palm_lo >= 0:
        block = out[palm_lo:palm_hi]
        norm = float(np.sqrt(np.sum(block * block)))
        if norm > _TINY and abs(norm - 1.0) > _TINY:
            out[palm_lo:palm_hi] = block / norm
    return out


def _objective_batch(pts, means, inv_covs, log_norms, log_priors, target, href, pen):
    probs = posterior_batch(pts, means, inv_covs, log_norms, log_priors)
    diff = probs - target
    vals = 0.5 * np.sum(diff * diff, axis=1)
    dev = pts - href
    return vals + (dev * dev) @ pen


def pgd_minimize(starts, lower, upper, palm_lo, palm_hi,
                 means, inv_covs, log_norms, log_priors,
                 target, href, pen, max_iter, step0, grad_h, tol):
    """Multi-start projected gradient descent with central-difference gradients.

    Minimizes 0.5*sum_b (p_b(x) - target_b)^2 + sum_a pen_a*(x_a - href_a)^2
    over the box [lower, upper] intersected with the unit-norm palm block.
    Backtracking halves the step until the objective strictly decreases.
    Returns the best final iterate across starts (ties keep the earliest
    start), together with its objective value.
    """
    dim = starts.shape[1]
    rows = np.arange(dim)
    best_x = None
    best_f = np.inf
    for s in range(starts.shape[0]):
        x = project_box_palm(starts[s].copy(), lower, upper, palm_lo, palm_hi)
        fx = float(_objective_batch(x[None, :], means, inv_covs, log_norms,
                                    log_priors, target, href, pen)[0])
        for _ in range(max_iter):
            pts = np.repeat(x[None, :], 2 * dim, axis=0)
            pts[rows, rows] += grad_h
            pts[dim + rows, rows] -= grad_h
            fvals = _objective_batch(pts, means, inv_covs, log_norms,
                                     log_priors, target, href, pen)
            grad = (fvals[:dim] - fvals[dim:]) / (2.0 * grad_h)

            step = step0
            moved = False
            xn = x
            fn = fx
            for _ in range(25):
                cand = project_box_palm(x - step * grad, lower, upper, palm_lo, palm_hi)
                fc = float(_objective_batch(cand[None, :], means, inv_covs, log_norms,
                                            log_priors, target, href, pen)[0])
                if fc < fx - 1e-15:
                    xn, fn, moved = cand, fc, True
                    break
                step *= 0.5
            if not moved:
                break
            delta = float(np.sqrt(np.sum((xn - x) ** 2)))
            x, fx = xn, fn
            if delta < tol:
                break
        if fx < best_f:
            best_f = fx
            best_x = x
    return best_x, best_f
