"""Pure-numpy implementations of the hot kernels.

Semantics must match ``_kernels.pyx`` exactly: this module is the fallback
selected at import time when the compiled extension is unavailable, and the
benchmark compares the two on identical inputs.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis)
    return m + np.log(np.exp(a - np.expand_dims(m, axis)).sum(axis=axis))


def sinkhorn_log_potentials(
    log_kernel: np.ndarray,
    log_mu: np.ndarray,
    log_nu: np.ndarray,
    tol: float,
    max_iters: int,
):
    """Alternating log-domain Sinkhorn updates on an augmented kernel.

    ``log_kernel`` is the (rows x cols) matrix of scores already divided by
    epsilon; ``log_mu``/``log_nu`` are the log marginal targets. Each
    iteration updates the column potentials then the row potentials, so on
    exit the row constraints hold exactly and the reported error is the
    worst relative column-marginal violation. Returns
    ``(u, v, iterations, marginal_error)``.
    """
    nu = np.exp(log_nu)
    u = np.zeros(log_kernel.shape[0])
    v = np.zeros(log_kernel.shape[1])
    err = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        v = log_nu - _logsumexp(log_kernel + u[:, None], axis=0)
        u = log_mu - _logsumexp(log_kernel + v[None, :], axis=1)
        col_sums = np.exp(log_kernel + u[:, None] + v[None, :]).sum(axis=0)
        err = float((np.abs(col_sums - nu) / nu).max())
        if err < tol:
            break
    return u, v, it, err


def peak_window_stats(
    plan: np.ndarray, h: int, w: int, radius: int, eps: float
):
    """Per-source-row peak window statistics of a transport plan.

    For each source row of ``plan`` (shape ``(h*w, h*w)``, row-major
    targets): locate the highest-mass target (first occurrence on ties,
    i.e. the smallest row-major index), clip a ``(2*radius+1)`` square
    window around it to the grid, and return the stabilized mass-weighted
    centroid plus the raw window mass:

        u_hat = (sum P*u' + eps*u_peak) / (sum P + eps)

    so a point mass yields the peak exactly and an all-zero row falls back
    to the peak found by the tie-break rule. Returns ``(u_hat, v_hat,
    window_mass)``, each of length ``h*w``.
    """
    n = plan.shape[0]
    u_hat = np.empty(n)
    v_hat = np.empty(n)
    mass = np.empty(n)
    us = np.arange(w, dtype=np.float64)
    vs = np.arange(h, dtype=np.float64)
    for i in range(n):
        row = plan[i].reshape(h, w)
        peak = int(plan[i].argmax())
        pu = peak % w
        pv = peak // w
        u0, u1 = max(0, pu - radius), min(w - 1, pu + radius)
        v0, v1 = max(0, pv - radius), min(h - 1, pv + radius)
        win = row[v0 : v1 + 1, u0 : u1 + 1]
        s = float(win.sum())
        su = float((win * us[None, u0 : u1 + 1]).sum())
        sv = float((win * vs[v0 : v1 + 1, None]).sum())
        u_hat[i] = (su + eps * pu) / (s + eps)
        v_hat[i] = (sv + eps * pv) / (s + eps)
        mass[i] = s
    return u_hat, v_hat, mass
