# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: log-domain Sinkhorn sweeps and plan window reductions.

Mirrors ``_kernels_py`` exactly; see that module for the contracts.
"""

import numpy as np

from libc.math cimport exp, fabs, log

BACKEND_NAME = "compiled"


def sinkhorn_log_potentials(const double[:, ::1] log_kernel,
                            const double[::1] log_mu,
                            const double[::1] log_nu,
                            double tol,
                            int max_iters):
    cdef Py_ssize_t rows = log_kernel.shape[0]
    cdef Py_ssize_t cols = log_kernel.shape[1]
    u_arr = np.zeros(rows)
    v_arr = np.zeros(cols)
    nu_arr = np.exp(np.asarray(log_nu))
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] nu = nu_arr
    cdef Py_ssize_t i, j
    cdef int it = 0
    cdef double m, s, t, col_sum, rel
    cdef double err = np.inf

    while it < max_iters:
        it += 1
        # column potentials
        for j in range(cols):
            m = log_kernel[0, j] + u[0]
            for i in range(1, rows):
                t = log_kernel[i, j] + u[i]
                if t > m:
                    m = t
            s = 0.0
            for i in range(rows):
                s += exp(log_kernel[i, j] + u[i] - m)
            v[j] = log_nu[j] - (m + log(s))
        # row potentials (rows are exact after this sweep)
        for i in range(rows):
            m = log_kernel[i, 0] + v[0]
            for j in range(1, cols):
                t = log_kernel[i, j] + v[j]
                if t > m:
                    m = t
            s = 0.0
            for j in range(cols):
                s += exp(log_kernel[i, j] + v[j] - m)
            u[i] = log_mu[i] - (m + log(s))
        # worst relative column-marginal violation
        err = 0.0
        for j in range(cols):
            col_sum = 0.0
            for i in range(rows):
                col_sum += exp(log_kernel[i, j] + u[i] + v[j])
            rel = fabs(col_sum - nu[j]) / nu[j]
            if rel > err:
                err = rel
        if err < tol:
            break
    return u_arr, v_arr, it, err


def peak_window_stats(const double[:, ::1] plan, int h, int w, int radius, double eps):
    cdef Py_ssize_t n = plan.shape[0]
    u_hat_arr = np.empty(n)
    v_hat_arr = np.empty(n)
    mass_arr = np.empty(n)
    cdef double[::1] u_hat = u_hat_arr
    cdef double[::1] v_hat = v_hat_arr
    cdef double[::1] mass = mass_arr
    cdef Py_ssize_t i, k, tu, tv, base
    cdef Py_ssize_t m_total = plan.shape[1]
    cdef Py_ssize_t peak, pu, pv, u0, u1, v0, v1
    cdef double best, p, s, su, sv

    for i in range(n):
        best = plan[i, 0]
        peak = 0
        for k in range(1, m_total):
            if plan[i, k] > best:
                best = plan[i, k]
                peak = k
        pu = peak % w
        pv = peak // w
        u0 = pu - radius
        if u0 < 0:
            u0 = 0
        u1 = pu + radius
        if u1 > w - 1:
            u1 = w - 1
        v0 = pv - radius
        if v0 < 0:
            v0 = 0
        v1 = pv + radius
        if v1 > h - 1:
            v1 = h - 1
        s = 0.0
        su = 0.0
        sv = 0.0
        for tv in range(v0, v1 + 1):
            base = tv * w
            for tu in range(u0, u1 + 1):
                p = plan[i, base + tu]
                s += p
                su += p * tu
                sv += p * tv
        u_hat[i] = (su + eps * pu) / (s + eps)
        v_hat[i] = (sv + eps * pv) / (s + eps)
        mass[i] = s
    return u_hat_arr, v_hat_arr, mass_arr
