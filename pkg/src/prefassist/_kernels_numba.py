"""Numba-jitted implementations of the hot numeric kernels.

Semantics mirror ``_kernels_numpy``; loop style keeps the jitted code free of
temporary allocations.  Compiled objects are cached on disk, so only the first
process pays the compile cost.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_TINY = 1e-12


@njit(cache=True, nogil=True)
def sigmoid(z):
    out = np.empty_like(z)
    flat_z = z.ravel()
    flat_o = out.ravel()
    for i in range(flat_z.shape[0]):
        v = flat_z[i]
        if v >= 0.0:
            flat_o[i] = 1.0 / (1.0 + np.exp(-v))
        else:
            ev = np.exp(v)
            flat_o[i] = ev / (1.0 + ev)
    return out


@njit(cache=True, nogil=True)
def nn_forward(w1, b1, w2, b2, x):
    z1 = x @ w1
    n, h = z1.shape
    for i in range(n):
        for j in range(h):
            v = z1[i, j] + b1[j]
            if v >= 0.0:
                z1[i, j] = 1.0 / (1.0 + np.exp(-v))
            else:
                ev = np.exp(v)
                z1[i, j] = ev / (1.0 + ev)
    out = z1 @ w2
    n_out = out.shape[1]
    for i in range(n):
        for j in range(n_out):
            out[i, j] += b2[j]
    return out


@njit(cache=True, nogil=True)
def nn_train_step(w1, b1, w2, b2, x, y, lr):
    n = x.shape[0]
    h = w1.shape[1]
    n_out = w2.shape[1]

    z1 = x @ w1
    a1 = np.empty_like(z1)
    for i in range(n):
        for j in range(h):
            v = z1[i, j] + b1[j]
            if v >= 0.0:
                a1[i, j] = 1.0 / (1.0 + np.exp(-v))
            else:
                ev = np.exp(v)
                a1[i, j] = ev / (1.0 + ev)
    raw = a1 @ w2
    diff = np.empty_like(raw)
    denom = float(n * n_out)
    loss = 0.0
    for i in range(n):
        for j in range(n_out):
            d = raw[i, j] + b2[j] - y[i, j]
            diff[i, j] = (2.0 / denom) * d
            loss += d * d
    loss /= denom

    g_w2 = a1.T @ diff
    g_b2 = np.zeros(n_out)
    for i in range(n):
        for j in range(n_out):
            g_b2[j] += diff[i, j]
    d_z1 = diff @ w2.T
    for i in range(n):
        for j in range(h):
            d_z1[i, j] *= a1[i, j] * (1.0 - a1[i, j])
    g_w1 = x.T @ d_z1
    g_b1 = np.zeros(h)
    for i in range(n):
        for j in range(h):
            g_b1[j] += d_z1[i, j]

    return (w1 - lr * g_w1, b1 - lr * g_b1, w2 - lr * g_w2, b2 - lr * g_b2, loss)


@njit(cache=True, nogil=True)
def posterior_batch(x, means, inv_covs, log_norms, log_priors):
    n, dim = x.shape
    num_tasks = means.shape[0]
    out = np.empty((n, num_tasks))
    logp = np.empty(num_tasks)
    for r in range(n):
        for b in range(num_tasks):
            quad = 0.0
            for i in range(dim):
                acc = 0.0
                for j in range(dim):
                    acc += inv_covs[b, i, j] * (x[r, j] - means[b, j])
                quad += (x[r, i] - means[b, i]) * acc
            logp[b] = log_priors[b] + log_norms[b] - 0.5 * quad
        m = logp[0]
        for b in range(1, num_tasks):
            if logp[b] > m:
                m = logp[b]
        total = 0.0
        for b in range(num_tasks):
            logp[b] = np.exp(logp[b] - m)
            total += logp[b]
        for b in range(num_tasks):
            out[r, b] = logp[b] / total
    return out


@njit(cache=True, nogil=True)
def project_box_palm(x, lower, upper, palm_lo, palm_hi):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        v = x[i]
        if v < lower[i]:
            v = lower[i]
        elif v > upper[i]:
            v = upper[i]
        out[i] = v
    if palm_lo >= 0:
        norm = 0.0
        for i in range(palm_lo, palm_hi):
            norm += out[i] * out[i]
        norm = np.sqrt(norm)
        if norm > _TINY and abs(norm - 1.0) > _TINY:
            for i in range(palm_lo, palm_hi):
                out[i] /= norm
    return out


@njit(cache=True, nogil=True)
def _objective_point(x, means, inv_covs, log_norms, log_priors, target, href, pen):
    num_tasks = means.shape[0]
    dim = x.shape[0]
    logp = np.empty(num_tasks)
    for b in range(num_tasks):
        quad = 0.0
        for i in range(dim):
            acc = 0.0
            for j in range(dim):
                acc += inv_covs[b, i, j] * (x[j] - means[b, j])
            quad += (x[i] - means[b, i]) * acc
        logp[b] = log_priors[b] + log_norms[b] - 0.5 * quad
    m = logp[0]
    for b in range(1, num_tasks):
        if logp[b] > m:
            m = logp[b]
    total = 0.0
    for b in range(num_tasks):
        logp[b] = np.exp(logp[b] - m)
        total += logp[b]
    f = 0.0
    for b in range(num_tasks):
        p = logp[b] / total
        f += 0.5 * (p - target[b]) * (p - target[b])
    for a in range(dim):
        dev = x[a] - href[a]
        f += pen[a] * dev * dev
    return f


@njit(cache=True, nogil=True)
def pgd_minimize(starts, lower, upper, palm_lo, palm_hi,
                 means, inv_covs, log_norms, log_priors,
                 target, href, pen, max_iter, step0, grad_h, tol):
    dim = starts.shape[1]
    best_x = np.empty(dim)
    best_f = np.inf
    grad = np.empty(dim)
    probe = np.empty(dim)
    for s in range(starts.shape[0]):
        x = project_box_palm(starts[s].copy(), lower, upper, palm_lo, palm_hi)
        fx = _objective_point(x, means, inv_covs, log_norms, log_priors,
                              target, href, pen)
        for _ in range(max_iter):
            for a in range(dim):
                probe[:] = x
                probe[a] = x[a] + grad_h
                f_plus = _objective_point(probe, means, inv_covs, log_norms,
                                          log_priors, target, href, pen)
                probe[a] = x[a] - grad_h
                f_minus = _objective_point(probe, means, inv_covs, log_norms,
                                           log_priors, target, href, pen)
                grad[a] = (f_plus - f_minus) / (2.0 * grad_h)

            step = step0
            moved = False
            xn = x
            fn = fx
            for _ in range(25):
                cand = project_box_palm(x - step * grad, lower, upper, palm_lo, palm_hi)
                fc = _objective_point(cand, means, inv_covs, log_norms,
                                      log_priors, target, href, pen)
                if fc < fx - 1e-15:
                    xn = cand
                    fn = fc
                    moved = True
                    break
                step *= 0.5
            if not moved:
                break
            delta = 0.0
            for a in range(dim):
                delta += (xn[a] - x[a]) * (xn[a] - x[a])
            x = xn
            fx = fn
            if np.sqrt(delta) < tol:
                break
        if fx < best_f:
            best_f = fx
            best_x[:] = x
    return best_x, best_f
