# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel for the hinge-loss MAP solver inner loop.

Twin of ``_hinge_py.solve_hinge``: projected subgradient descent with
best-iterate tracking over packed CSR-style rule arrays.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

COMPILED = True


def solve_hinge(indptr, var_idx, coefs, bias, weights, power, n_vars, x0,
                steps, tolerance, check_every, restart_every=0, first_check=0):
    """Minimize sum_j w_j * max(0, A_j x + b_j) ** power over [0, 1]^n."""
    cdef cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.int64_t[::1] vi = np.ascontiguousarray(var_idx, dtype=np.int64)
    cdef double[::1] cf = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(bias, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[::1] st = np.ascontiguousarray(steps, dtype=np.float64)

    cdef int p = power
    cdef Py_ssize_t n = n_vars
    cdef Py_ssize_t n_rules = b.shape[0]
    cdef Py_ssize_t max_iter = st.shape[0]
    cdef double tol = tolerance
    cdef Py_ssize_t check = check_every
    cdef Py_ssize_t restart = restart_every
    cdef Py_ssize_t first = first_check

    x_arr = np.asarray(x0, dtype=np.float64).copy()
    best_arr = x_arr.copy()
    grad_arr = np.zeros(n, dtype=np.float64)
    trace_arr = np.empty(max_iter, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] best = best_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] trace = trace_arr

    cdef double best_f = np.inf
    cdef double last_check = np.inf
    cdef double f, z, g, step, v
    cdef Py_ssize_t k, j, t, lo, hi, done = 0

    for k in range(max_iter):
        if restart > 0 and k > 0 and k % restart == 0:
            for t in range(n):
                x[t] = best[t]
        # Objective and rule activations at the current iterate.
        f = 0.0
        for t in range(n):
            grad[t] = 0.0
        for j in range(n_rules):
            lo = ip[j]
            hi = ip[j + 1]
            z = b[j]
            for t in range(lo, hi):
                z += cf[t] * x[vi[t]]
            if z > 0.0:
                if p == 1:
                    f += w[j] * z
                    g = w[j]
                else:
                    f += w[j] * z * z
                    g = 2.0 * w[j] * z
                for t in range(lo, hi):
                    grad[vi[t]] += g * cf[t]
        if f < best_f:
            best_f = f
            for t in range(n):
                best[t] = x[t]
        trace[k] = best_f
        done = k + 1
        if done >= first and done % check == 0:
            if last_check - best_f < tol:
                break
            last_check = best_f

        # Normalized subgradient step: st[k] is the movement magnitude.
        gnorm = 0.0
        for t in range(n):
            gnorm += grad[t] * grad[t]
        if gnorm > 0.0:
            step = st[k] / sqrt(gnorm)
            for t in range(n):
                v = x[t] - step * grad[t]
                if v < 0.0:
                    v = 0.0
                elif v > 1.0:
                    v = 1.0
                x[t] = v

    return best_arr, best_f, done, trace_arr[:done]


def solve_admm(indptr, var_idx, coefs, bias, weights, power, n_vars, x0,
               rho, max_iter, tolerance, min_iter=10):
    """Consensus ADMM for sum_j w_j * max(0, A_j x + b_j) ** power on [0, 1]^n."""
    cdef cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.int64_t[::1] vi = np.ascontiguousarray(var_idx, dtype=np.int64)
    cdef double[::1] cf = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(bias, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)

    cdef int p = power
    cdef Py_ssize_t n = n_vars
    cdef Py_ssize_t n_rules = b.shape[0]
    cdef Py_ssize_t nnz = vi.shape[0]
    cdef double r = rho
    cdef double tol = tolerance
    cdef Py_ssize_t kmax = max_iter
    cdef Py_ssize_t kmin = min_iter

    x_arr = np.asarray(x0, dtype=np.float64).copy()
    best_arr = x_arr.copy()
    xnew_arr = x_arr.copy()
    y_arr = np.zeros(nnz, dtype=np.float64)
    dual_arr = np.zeros(nnz, dtype=np.float64)
    num_arr = np.zeros(n, dtype=np.float64)
    cnt_arr = np.zeros(n, dtype=np.float64)
    a2_arr = np.zeros(n_rules, dtype=np.float64)
    trace_arr = np.empty(kmax, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] best = best_arr
    cdef double[::1] xnew = xnew_arr
    cdef double[::1] y = y_arr
    cdef double[::1] dual = dual_arr
    cdef double[::1] num = num_arr
    cdef double[::1] cnt = cnt_arr
    cdef double[::1] a2 = a2_arr
    cdef double[::1] trace = trace_arr

    cdef Py_ssize_t k, j, t, lo, hi, v, done = 0
    cdef double s, alpha, delta, f, z, u, val, primal_res, dual_res, diff
    cdef double best_f = np.inf

    for j in range(n_rules):
        lo = ip[j]; hi = ip[j + 1]
        for t in range(lo, hi):
            a2[j] += cf[t] * cf[t]
            cnt[vi[t]] += 1.0

    for k in range(kmax):
        # Local proximal step per rule.
        for j in range(n_rules):
            lo = ip[j]; hi = ip[j + 1]
            s = b[j]
            for t in range(lo, hi):
                s += cf[t] * (x[vi[t]] - dual[t])
            if p == 1:
                delta = w[j] / r
                if s <= 0.0:
                    alpha = 0.0
                elif s - delta * a2[j] >= 0.0:
                    alpha = delta
                elif a2[j] > 0.0:
                    alpha = s / a2[j]
                else:
                    alpha = 0.0
            else:
                if s > 0.0:
                    alpha = 2.0 * w[j] * (s / (1.0 + 2.0 * w[j] * a2[j] / r)) / r
                else:
                    alpha = 0.0
            for t in range(lo, hi):
                y[t] = (x[vi[t]] - dual[t]) - alpha * cf[t]

        # Consensus update with box projection.
        for v in range(n):
            num[v] = 0.0
        for t in range(nnz):
            num[vi[t]] += y[t] + dual[t]
        dual_res = 0.0
        for v in range(n):
            if cnt[v] > 0.0:
                val = num[v] / cnt[v]
                if val < 0.0:
                    val = 0.0
                elif val > 1.0:
                    val = 1.0
            else:
                val = x[v]
            diff = val - x[v]
            if diff < 0.0:
                diff = -diff
            if r * diff > dual_res:
                dual_res = r * diff
            xnew[v] = val

        primal_res = 0.0
        for t in range(nnz):
            diff = y[t] - xnew[vi[t]]
            dual[t] += diff
            if diff < 0.0:
                diff = -diff
            if diff > primal_res:
                primal_res = diff
        for v in range(n):
            x[v] = xnew[v]

        # Objective at the consensus iterate.
        f = 0.0
        for j in range(n_rules):
            lo = ip[j]; hi = ip[j + 1]
            z = b[j]
            for t in range(lo, hi):
                z += cf[t] * x[vi[t]]
            if z > 0.0:
                if p == 1:
                    f += w[j] * z
                else:
                    f += w[j] * z * z
        if f < best_f:
            best_f = f
            for v in range(n):
                best[v] = x[v]
        trace[k] = best_f
        done = k + 1
        if done >= kmin and primal_res < tol and dual_res < tol:
            break

    if n_rules == 0:
        best_f = 0.0
    return best_arr, best_f, done, trace_arr[:done]
