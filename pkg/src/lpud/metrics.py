"""ERLE and normalized system mismatch."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DimensionError
from .signal import FirStack

DB_CAP = 80.0
ERLE_FLOOR = 1e-12


def to_db(value, cap: float = DB_CAP):
    """``10 log10`` clipped to ``[-cap, cap]``; zero maps to ``-cap``."""
    value = np.asarray(value, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(value)
    out = np.clip(out, -cap, cap)
    return float(out) if out.ndim == 0 else out


def erle(d: np.ndarray, y_hat: np.ndarray, n1: int, n2: int) -> float:
    """Average per-sample ratio ``d^2 / (d - y_hat)^2`` over samples ``n1..n2`` (inclusive).

    ``d`` and ``y_hat`` have shape ``(Q, N)``. The result is linear; use
    :func:`to_db` for reporting.
    """
    d = np.atleast_2d(np.asarray(d, dtype=float))
    y_hat = np.atleast_2d(np.asarray(y_hat, dtype=float))
    if d.shape != y_hat.shape:
        raise DimensionError(f"d {d.shape} and y_hat {y_hat.shape} differ")
    if n2 < n1 or n1 < 0 or n2 >= d.shape[1]:
        raise ConfigurationError(f"invalid sample range [{n1}, {n2}] for {d.shape[1]} samples")
    ds = d[:, n1:n2 + 1]
    resid = np.maximum((ds - y_hat[:, n1:n2 + 1]) ** 2, ERLE_FLOOR)
    return float(np.mean(ds * ds / resid))


def system_mismatch_block(truth: FirStack, estimate: FirStack) -> float:
    """Mean over all ``(p, q)`` filters of ``||h - h_hat||^2 / ||h||^2``."""
    if (truth.P, truth.L, truth.Q) != (estimate.P, estimate.L, estimate.Q):
        raise DimensionError("truth and estimate have different (P, L, Q)")
    t = truth.taps()
    energy = np.sum(t * t, axis=1)
    if np.any(energy == 0):
        raise ConfigurationError("a true filter has zero norm")
    err = np.sum((t - estimate.taps()) ** 2, axis=1)
    return float(np.mean(err / energy))


def system_mismatch_avg(trace, m1: int, m2: int) -> float:
    """Temporal mean of a per-block mismatch trace over blocks ``m1..m2`` (1-based, inclusive)."""
    trace = np.asarray(trace, dtype=float)
    if m2 < m1 or m1 < 1 or m2 > trace.size:
        raise ConfigurationError(f"invalid block range [{m1}, {m2}] for {trace.size} blocks")
    return float(np.mean(trace[m1 - 1:m2]))


def phase_split(n: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Split ``n`` items into convergence and steady-state halves ``(lo, hi)`` (0-based, inclusive)."""
    half = n // 2
    return (0, half - 1), (half, n - 1)
