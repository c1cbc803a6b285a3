"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the three hot kernels (batched forward pass, full-batch training step,
multi-start projected gradient solve) on pipeline-sized inputs with both
backends, reporting per-call medians, speedups, and the maximum numeric
deviation between the two implementations.

    python benchmarks/bench_backends.py [--quick]
"""

import argparse
import time

import numpy as np

from prefassist import _kernels_numpy as knp

try:
    from prefassist import _kernels_numba as knb
    HAS_NUMBA = True
except ImportError:
    knb = None
    HAS_NUMBA = False
    print("numba unavailable; timing the numpy fallback only")


def time_call(fn, args, repeats, number):
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        for _ in range(number):
            fn(*args)
        best.append((time.perf_counter_ns() - t0) / number)
    return np.median(best) * 1e-9


def deviation(a, b):
    if isinstance(a, tuple):
        return max(deviation(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def make_cases(rng):
    n_in, hidden, n_out = 12, 16, 3
    w1 = rng.normal(size=(n_in, hidden))
    b1 = rng.normal(size=hidden)
    w2 = rng.normal(size=(hidden, n_out))
    b2 = rng.normal(size=n_out)
    x_train = rng.normal(size=(756, n_in))
    y_train = rng.integers(1, 4, size=(756, n_out)).astype(float)

    dim, tasks = 12, 3
    means = rng.normal(size=(tasks, dim))
    covs = np.stack([np.eye(dim) * (0.5 + rng.random()) for _ in range(tasks)])
    inv_covs = np.stack([np.linalg.inv(c) for c in covs])
    log_norms = np.array([-0.5 * (dim * np.log(2 * np.pi) + np.linalg.slogdet(c)[1])
                          for c in covs])
    log_priors = np.full(tasks, np.log(1.0 / tasks))
    lower = np.full(dim, -1.0)
    upper = np.full(dim, 1.0)
    target = np.array([0.8, 0.15, 0.05])
    href = rng.uniform(-0.5, 0.5, size=dim)
    pen = np.abs(rng.normal(size=dim))
    starts = rng.uniform(-1, 1, size=(8, dim))

    return [
        ("nn_forward(756x12)", "nn_forward", (w1, b1, w2, b2, x_train)),
        ("nn_train_step(756x12)", "nn_train_step", (w1, b1, w2, b2, x_train, y_train, 0.2)),
        ("posterior_batch(756)", "posterior_batch", (x_train * 0.3, means, inv_covs, log_norms, log_priors)),
        ("pgd_minimize(8 starts)", "pgd_minimize",
         (starts, lower, upper, 0, 3, means, inv_covs, log_norms, log_priors,
          target, href, pen, 150, 0.25, 1e-5, 1e-8)),
    ]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="fewer repeats")
    args = parser.parse_args()
    repeats = 3 if args.quick else 7
    rng = np.random.default_rng(7)
    cases = make_cases(rng)

    print(f"{'kernel':>24} | {'numpy (ms)':>11} | {'numba (ms)':>11} | {'speedup':>8} | {'max dev':>9}")
    print("-" * 78)
    for label, name, call_args in cases:
        np_fn = getattr(knp, name)
        number = 2 if name == "pgd_minimize" else 20
        ref = np_fn(*call_args)
        t_np = time_call(np_fn, call_args, repeats, number)
        if HAS_NUMBA:
            nb_fn = getattr(knb, name)
            out = nb_fn(*call_args)  # compile before timing
            t_nb = time_call(nb_fn, call_args, repeats, number)
            dev = deviation(ref, out)
            print(f"{label:>24} | {t_np * 1e3:11.3f} | {t_nb * 1e3:11.3f} | "
                  f"{t_np / t_nb:8.1f} | {dev:9.2e}")
        else:
            print(f"{label:>24} | {t_np * 1e3:11.3f} | {'-':>11} | {'-':>8} | {'-':>9}")


if __name__ == "__main__":
    main()
