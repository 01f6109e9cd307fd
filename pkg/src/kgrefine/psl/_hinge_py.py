"""Pure-NumPy fallback for the hinge-loss MAP solver inner loops.

Same contract as the compiled kernels in ``_hinge.pyx``: consensus ADMM with
closed-form hinge proximal steps (the default solver) and projected
subgradient descent with best-iterate tracking.
"""

import numpy as np
import scipy.sparse as sp

COMPILED = False


def solve_admm(indptr, var_idx, coefs, bias, weights, power, n_vars, x0,
               rho, max_iter, tolerance, min_iter=10):
    """Consensus ADMM for sum_j w_j * max(0, A_j x + b_j) ** power on [0, 1]^n.

    Each rule owns local copies of its variables; the proximal step has a
    closed form for both hinge powers.  Stops when the primal and dual
    residual inf-norms drop below ``tolerance``.  Returns
    (best_x, best_objective, iterations_run, best_objective_trace).
    """
    n_rules = len(bias)
    nnz = len(var_idx)
    rule_of = np.repeat(np.arange(n_rules), np.diff(indptr))
    a2 = np.bincount(rule_of, weights=coefs * coefs, minlength=n_rules)
    counts = np.bincount(var_idx, minlength=n_vars).astype(np.float64)
    covered = counts > 0

    x = np.asarray(x0, dtype=np.float64).copy()
    dual = np.zeros(nnz)
    best_x, best_f = x.copy(), np.inf
    trace = np.empty(max_iter)
    done = 0

    for k in range(max_iter):
        u_loc = x[var_idx] - dual
        s = np.bincount(rule_of, weights=coefs * u_loc, minlength=n_rules) + bias
        if power == 1:
            delta = weights / rho
            alpha = np.where(s <= 0.0, 0.0,
                             np.where(s - delta * a2 >= 0.0, delta,
                                      np.divide(s, a2, out=np.zeros_like(s), where=a2 > 0)))
        else:
            t = np.where(s > 0.0, s / (1.0 + 2.0 * weights * a2 / rho), 0.0)
            alpha = 2.0 * weights * t / rho
        y = u_loc - alpha[rule_of] * coefs

        x_new = np.bincount(var_idx, weights=y + dual, minlength=n_vars)
        x_new = np.where(covered, x_new / np.maximum(counts, 1.0), x)
        np.clip(x_new, 0.0, 1.0, out=x_new)
        primal = y - x_new[var_idx]
        dual += primal
        dual_res = rho * float(np.abs(x_new - x).max()) if n_vars else 0.0
        primal_res = float(np.abs(primal).max()) if nnz else 0.0
        x = x_new

        z = np.bincount(rule_of, weights=coefs * x[var_idx], minlength=n_rules) + bias
        d = np.maximum(z, 0.0)
        f = float(weights @ (d if power == 1 else d * d))
        if f < best_f:
            best_f = f
            best_x = x.copy()
        trace[k] = best_f
        done = k + 1
        if done >= min_iter and primal_res < tolerance and dual_res < tolerance:
            break

    if n_rules == 0:
        best_f = 0.0
    return best_x, best_f, done, trace[:done]


def solve_hinge(indptr, var_idx, coefs, bias, weights, power, n_vars, x0,
                steps, tolerance, check_every, restart_every=0, first_check=0):
    """Minimize sum_j w_j * max(0, A_j x + b_j) ** power over [0, 1]^n.

    Returns (best_x, best_objective, iterations_run, best_objective_trace);
    the trace is non-increasing by construction.  With ``restart_every`` > 0
    the iterate is reset to the best point at stage boundaries.
    """
    n_rules = len(bias)
    A = sp.csr_matrix((coefs, var_idx, indptr), shape=(n_rules, n_vars))
    At = A.T.tocsr()

    x = np.asarray(x0, dtype=np.float64).copy()
    best_x = x.copy()
    best_f = np.inf
    trace = np.empty(len(steps), dtype=np.float64)
    last_check = np.inf
    done = 0

    for k, step in enumerate(steps):
        if restart_every and k and k % restart_every == 0:
            x = best_x.copy()
        z = A @ x + bias
        active = z > 0.0
        if power == 1:
            f = float(weights[active] @ z[active])
            g_rule = np.where(active, weights, 0.0)
        else:
            za = np.where(active, z, 0.0)
            f = float(weights @ (za * za))
            g_rule = 2.0 * weights * za
        if f < best_f:
            best_f = f
            best_x = x.copy()
        trace[k] = best_f
        done = k + 1
        if done >= first_check and done % check_every == 0:
            if last_check - best_f < tolerance:
                break
            last_check = best_f
        grad = At @ g_rule
        # Normalized subgradient step: `step` is the movement magnitude.
        norm = float(np.linalg.norm(grad))
        if norm > 0.0:
            np.clip(x - (step / norm) * grad, 0.0, 1.0, out=x)

    return best_x, best_f, done, trace[:done]
