"""Kernel backend selection.

``PREFASSIST_BACKEND`` picks the implementation of the hot numeric kernels:

* ``auto`` (default) - numba if importable, else pure numpy
* ``numba``          - require the jitted kernels, fail if numba is missing
* ``numpy``          - force the pure-numpy fallback

The two backends implement identical algorithms; results agree to floating-
point noise (see ``benchmarks/bench_backends.py`` for timings and deviation).
The flag is read once at import time so a process uses one backend throughout,
keeping seeded runs bit-reproducible.
"""

from __future__ import annotations

import os

_choice = os.environ.get("PREFASSIST_BACKEND", "auto").strip().lower()

if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"PREFASSIST_BACKEND must be auto, numba, or numpy (got {_choice!r})"
    )

if _choice == "numpy":
    from . import _kernels_numpy as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise
        from . import _kernels_numpy as _impl

        BACKEND = "numpy"

sigmoid = _impl.sigmoid
nn_forward = _impl.nn_forward
nn_train_step = _impl.nn_train_step
posterior_batch = _impl.posterior_batch
project_box_palm = _impl.project_box_palm
pgd_minimize = _impl.pgd_minimize
