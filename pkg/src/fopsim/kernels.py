"""Hot Monte Carlo kernels: per-trial fetch-savings tallies.

The numba path is used by default; set FOPSIM_NO_NUMBA=1 (or any non-empty
value) to force the pure-numpy fallback. Both consume the same pre-drawn
uniforms and return bit-identical tallies, so the backend choice never
changes results. ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "backend_name",
    "tally_savings",
    "tally_savings_numpy",
    "tally_savings_numba",
]

_DISABLED = bool(os.environ.get("FOPSIM_NO_NUMBA"))

if not _DISABLED:
    try:
        from numba import njit
        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def tally_savings_numpy(uniforms: np.ndarray, q: float) -> tuple[int, int, int]:
    """Count trials saving 0/1/2 round trips.

    Column 0 of ``uniforms`` is the primary host's draw, the rest are the
    secondaries'. A draw below ``q`` means the abbreviated attempt hits;
    one RTT is saved on the primary, and one more only if every secondary
    hits (the parallel stage finishes early only when nothing stalls it).
    """
    hit = uniforms < q
    saved = hit[:, 0].astype(np.int64) + hit[:, 1:].all(axis=1)
    counts = np.bincount(saved, minlength=3)
    return int(counts[0]), int(counts[1]), int(counts[2])


if NUMBA_ENABLED:

    @njit(cache=True)
    def _tally_savings_jit(uniforms, q):  # pragma: no cover - compiled
        n0 = 0
        n1 = 0
        n2 = 0
        rows, cols = uniforms.shape
        for i in range(rows):
            saved = 0
            if uniforms[i, 0] < q:
                saved += 1
            all_hit = True
            for j in range(1, cols):
                if uniforms[i, j] >= q:
                    all_hit = False
                    break
            if all_hit:
                saved += 1
            if saved == 0:
                n0 += 1
            elif saved == 1:
                n1 += 1
            else:
                n2 += 1
        return n0, n1, n2

    def tally_savings_numba(uniforms: np.ndarray, q: float) -> tuple[int, int, int]:
        n0, n1, n2 = _tally_savings_jit(np.ascontiguousarray(uniforms), float(q))
        return int(n0), int(n1), int(n2)

    tally_savings = tally_savings_numba
else:
    tally_savings_numba = None
    tally_savings = tally_savings_numpy


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
