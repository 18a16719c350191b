"""Vectorized bracketed scalar maximization."""
from __future__ import annotations

import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(fun, lo, hi, tol: float = 1e-12, max_iter: int = 200):
    """Maximize ``fun`` on each bracket ``[lo[j], hi[j]]`` simultaneously.

    ``fun`` takes an array of abscissae (same shape as ``lo``) and returns the
    objective at each. Returns ``(x, fun(x))``. Converges to a local maximum
    inside each bracket; unimodality is the caller's business.
    """
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if np.all(b - a <= tol):
            break
        left = fc >= fd
        # keep [a, d] where the left probe wins, [c, b] otherwise
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - INV_PHI * (b - a), d)
        new_d = np.where(left, c, a + INV_PHI * (b - a))
        new_fc = np.where(left, np.nan, fd)
        new_fd = np.where(left, fc, np.nan)
        c, d = new_c, new_d
        need_c, need_d = np.isnan(new_fc), np.isnan(new_fd)
        if need_c.any():
            new_fc = np.where(need_c, fun(c), new_fc)
        if need_d.any():
            new_fd = np.where(need_d, fun(d), new_fd)
        fc, fd = new_fc, new_fd
    x = np.where(fc >= fd, c, d)
    return x, np.maximum(fc, fd)
