"""Pure-Python/numpy implementations of the numeric kernels.

These mirror ``_kernels.pyx`` operation for operation and are used when the
compiled extension is unavailable (or ``PVANOMALY_PURE_PYTHON=1``).
"""

from __future__ import annotations

import numpy as np


def smo_one_class(K, upper, tol=1e-6, max_iter=100_000):
    """Pairwise SMO on ``min 1/2 a'Ka  s.t. 0 <= a_i <= upper, sum(a) = 1``.

    Returns ``(alpha, grad, n_iter)`` where ``grad = K @ alpha``. ``n_iter``
    equals ``max_iter`` when the KKT tolerance was not reached.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    n = K.shape[0]
    alpha = np.zeros(n)
    n_full = min(n, int(np.floor(1.0 / upper + 1e-12)))
    alpha[:n_full] = upper
    if n_full < n:
        alpha[n_full] = max(0.0, 1.0 - n_full * upper)
    grad = K @ alpha
    it = 0
    while it < max_iter:
        up = alpha < upper
        low = alpha > 0.0
        g_up = np.where(up, grad, np.inf)
        g_low = np.where(low, grad, -np.inf)
        i = int(np.argmin(g_up))
        j = int(np.argmax(g_low))
        if g_low[j] - g_up[i] < tol:
            break
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad < 1e-12:
            quad = 1e-12
        delta = (grad[j] - grad[i]) / quad
        room_i = upper - alpha[i]
        room_j = alpha[j]
        if delta >= room_i:
            delta = room_i
        if delta >= room_j:
            delta = room_j
        if delta == room_i:
            alpha[i] = upper
        else:
            alpha[i] += delta
        if delta == room_j:
            alpha[j] = 0.0
        else:
            alpha[j] -= delta
        grad += delta * (K[:, i] - K[:, j])
        it += 1
    return alpha, grad, it


def forest_apply(X, feature, threshold, left, right, value, roots):
    """Sum over trees of the leaf value reached by each row of ``X``.

    A node is a leaf when ``left[node] < 0``; otherwise rows with
    ``x[feature] <= threshold`` descend left.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    m = X.shape[0]
    rows = np.arange(m)
    total = np.zeros(m)
    for root in np.asarray(roots).tolist():
        node = np.full(m, root, dtype=np.int64)
        active = left[node] >= 0
        while np.any(active):
            idx = rows[active]
            nd = node[idx]
            go_left = X[idx, feature[nd]] <= threshold[nd]
            node[idx] = np.where(go_left, left[nd], right[nd])
            active[idx] = left[node[idx]] >= 0
        total += value[node]
    return total


def _affine_minimizer(Qs):
    """Point of minimum norm in the affine hull of the rows of ``Qs``."""
    m = Qs.shape[0]
    A = np.zeros((m + 1, m + 1))
    A[:m, :m] = Qs @ Qs.T
    A[:m, m] = 1.0
    A[m, :m] = 1.0
    b = np.zeros(m + 1)
    b[m] = 1.0
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    w = sol[:m]
    return w @ Qs, w


def min_norm_point(V, p, tol=1e-14, max_iter=1000):
    """Wolfe's algorithm for the distance from ``p`` to ``conv(V)``.

    Returns ``(distance, corral, weights)``: ``weights`` are convex
    coefficients on rows ``corral`` of ``V`` whose combination is the
    nearest hull point.
    """
    V = np.ascontiguousarray(V, dtype=np.float64)
    Q = V - np.asarray(p, dtype=np.float64)
    norms = np.einsum("ij,ij->i", Q, Q)
    scale = max(float(norms.max()), 1e-300)
    j0 = int(np.argmin(norms))
    S = [j0]
    lam = np.array([1.0])
    x = Q[j0].copy()
    eps = 1e-12
    for _ in range(max_iter):
        dots = Q @ x
        j = int(np.argmin(dots))
        xx = float(x @ x)
        if xx - dots[j] <= tol * scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            y, w = _affine_minimizer(Q[S])
            if np.all(w > eps):
                lam = w
                x = y
                break
            neg = w <= eps
            ratios = lam[neg] / (lam[neg] - w[neg])
            theta = float(ratios.min())
            lam = (1.0 - theta) * lam + theta * w
            drop = lam <= eps
            drop[np.flatnonzero(neg)[int(np.argmin(ratios))]] = True
            S = [s for s, d in zip(S, drop) if not d]
            lam = lam[~drop]
            lam = lam / lam.sum()
            x = lam @ Q[S]
            if len(S) == 1:
                break
    return float(np.sqrt(max(float(x @ x), 0.0))), np.array(S, dtype=np.int64), lam
