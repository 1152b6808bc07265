"""Sequential minimal optimization for the binary C-SVM dual.

Solves ``min 0.5 a'Qa - sum(a)`` s.t. ``0 <= a <= C``, ``y'a = 0`` with
``Q_ij = y_i y_j K_ij``. Working pairs are chosen by the maximal-violating /
second-order rule, so the solver is fully deterministic. The Gram matrix is
passed whole and addressed through an index array, letting one-vs-one machines
and cross-validation folds share a single kernel evaluation.
"""

import numpy as np
from numba import njit

_TAU = 1e-12


@njit(cache=True)
def solve_binary(K, idx, y, C, tol, max_iter):
    """Return ``(alpha, b, n_iter)``; decision is ``sum(alpha*y*K) + b``."""
    m = idx.shape[0]
    alpha = np.zeros(m)
    grad = -np.ones(m)
    diag = np.empty(m)
    for t in range(m):
        diag[t] = K[idx[t], idx[t]]

    it = 0
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(m):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v > gmax:
                    gmax = v
                    i = t
        # j: second-order choice in I_low
        gmin = np.inf
        j = -1
        best = np.inf
        if i >= 0:
            ki = idx[i]
            for t in range(m):
                in_low = (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C)
                if not in_low:
                    continue
                v = -y[t] * grad[t]
                if v < gmin:
                    gmin = v
                b_it = gmax - v
                if b_it > 0:
                    a_it = diag[i] + diag[t] - 2.0 * K[ki, idx[t]]
                    if a_it <= 0:
                        a_it = _TAU
                    score = -(b_it * b_it) / a_it
                    if score < best:
                        best = score
                        j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            break

        kij = K[idx[i], idx[j]]
        ai_old = alpha[i]
        aj_old = alpha[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] - 2.0 * kij
            if quad <= 0:
                quad = _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * kij
            if quad <= 0:
                quad = _TAU
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        di = (alpha[i] - ai_old) * y[i]
        dj = (alpha[j] - aj_old) * y[j]
        ki = idx[i]
        kj = idx[j]
        for t in range(m):
            kt = idx[t]
            grad[t] += y[t] * (di * K[kt, ki] + dj * K[kt, kj])
        it += 1

    # bias from free vectors, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    acc = 0.0
    n_free = 0
    for t in range(m):
        yg = y[t] * grad[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            acc += yg
    if n_free > 0:
        rho = acc / n_free
    else:
        rho = 0.5 * (ub + lb)
    return alpha, -rho, it


@njit(cache=True)
def solve_many(K, flat_idx, flat_y, offsets, C, tol, max_iter):
    """Run :func:`solve_binary` on consecutive slices ``offsets[p]:offsets[p+1]``."""
    n_prob = offsets.shape[0] - 1
    alpha = np.zeros(flat_idx.shape[0])
    bias = np.zeros(n_prob)
    iters = np.zeros(n_prob, dtype=np.int64)
    for p in range(n_prob):
        lo = offsets[p]
        hi = offsets[p + 1]
        a, b, n = solve_binary(K, flat_idx[lo:hi], flat_y[lo:hi], C, tol, max_iter)
        alpha[lo:hi] = a
        bias[p] = b
        iters[p] = n
    return alpha, bias, iters


@njit(cache=True)
def decision_many(K_cross, flat_idx, flat_coef, offsets, bias):
    """Decision values ``(n_query, n_prob)``; ``K_cross`` rows are queries and
    its columns are addressed by ``flat_idx``."""
    n_q = K_cross.shape[0]
    n_prob = offsets.shape[0] - 1
    out = np.empty((n_q, n_prob))
    for q in range(n_q):
        for p in range(n_prob):
            s = bias[p]
            for t in range(offsets[p], offsets[p + 1]):
                c = flat_coef[t]
                if c != 0.0:
                    s += c * K_cross[q, flat_idx[t]]
            out[q, p] = s
    return out
