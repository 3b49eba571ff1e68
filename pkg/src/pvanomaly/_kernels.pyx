# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numeric kernels; see ``_kernels_py`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, fabs, INFINITY

cnp.import_array()


def smo_one_class(K, double upper, double tol=1e-6, long max_iter=100000):
    cdef double[:, ::1] k = np.ascontiguousarray(K, dtype=np.float64)
    cdef Py_ssize_t n = k.shape[0]
    alpha_arr = np.zeros(n)
    cdef double[::1] alpha = alpha_arr
    cdef Py_ssize_t n_full = min(n, <Py_ssize_t>floor(1.0 / upper + 1e-12))
    cdef Py_ssize_t a, b
    for a in range(n_full):
        alpha[a] = upper
    if n_full < n:
        alpha[n_full] = max(0.0, 1.0 - n_full * upper)
    grad_arr = np.asarray(K, dtype=np.float64) @ alpha_arr
    cdef double[::1] grad = grad_arr
    cdef long it = 0
    cdef Py_ssize_t i, j
    cdef double gmin, gmax, quad, delta, room_i, room_j
    while it < max_iter:
        i = -1
        j = -1
        gmin = INFINITY
        gmax = -INFINITY
        for a in range(n):
            if alpha[a] < upper and grad[a] < gmin:
                gmin = grad[a]
                i = a
            if alpha[a] > 0.0 and grad[a] > gmax:
                gmax = grad[a]
                j = a
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        quad = k[i, i] + k[j, j] - 2.0 * k[i, j]
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
        for b in range(n):
            grad[b] += delta * (k[b, i] - k[b, j])
        it += 1
    return alpha_arr, grad_arr, it


def forest_apply(X, feature, threshold, left, right, value, roots):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int64_t[::1] feat = np.ascontiguousarray(feature, dtype=np.int64)
    cdef double[::1] thr = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef cnp.int64_t[::1] lft = np.ascontiguousarray(left, dtype=np.int64)
    cdef cnp.int64_t[::1] rgt = np.ascontiguousarray(right, dtype=np.int64)
    cdef double[::1] val = np.ascontiguousarray(value, dtype=np.float64)
    cdef cnp.int64_t[::1] rts = np.ascontiguousarray(roots, dtype=np.int64)
    cdef Py_ssize_t m = x.shape[0]
    out = np.zeros(m)
    cdef double[::1] total = out
    cdef Py_ssize_t r, t, node
    for t in range(rts.shape[0]):
        for r in range(m):
            node = rts[t]
            while lft[node] >= 0:
                if x[r, feat[node]] <= thr[node]:
                    node = lft[node]
                else:
                    node = rgt[node]
            total[r] += val[node]
    return out


cdef int _solve(double[:, ::1] A, double[::1] b, Py_ssize_t n) nogil:
    """Gaussian elimination with partial pivoting; solution left in ``b``."""
    cdef Py_ssize_t col, row, piv, c
    cdef double best, tmp, f
    for col in range(n):
        piv = col
        best = fabs(A[col, col])
        for row in range(col + 1, n):
            if fabs(A[row, col]) > best:
                best = fabs(A[row, col])
                piv = row
        if best < 1e-300:
            return -1
        if piv != col:
            for c in range(n):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for row in range(col + 1, n):
            f = A[row, col] / A[col, col]
            if f != 0.0:
                for c in range(col, n):
                    A[row, c] -= f * A[col, c]
                b[row] -= f * b[col]
    for col in range(n - 1, -1, -1):
        tmp = b[col]
        for c in range(col + 1, n):
            tmp -= A[col, c] * b[c]
        b[col] = tmp / A[col, col]
    return 0


def min_norm_point(V, p, double tol=1e-14, long max_iter=1000):
    cdef double[:, ::1] v = np.ascontiguousarray(V, dtype=np.float64)
    cdef double[::1] pt = np.ascontiguousarray(p, dtype=np.float64)
    cdef Py_ssize_t N = v.shape[0], d = v.shape[1]
    cdef Py_ssize_t cap = d + 2
    cdef Py_ssize_t a, b, c, m, j, j0, it, kk, ndrop, argr
    cdef double s, norm, best, scale, xx, dot, theta, ratio, eps = 1e-12, total
    x_arr = np.zeros(d)
    y_arr = np.zeros(d)
    cdef double[::1] x = x_arr
    cdef double[::1] y = y_arr
    S_arr = np.zeros(cap + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] S = S_arr
    lam_arr = np.zeros(cap + 1)
    cdef double[::1] lam = lam_arr
    w_arr = np.zeros(cap + 2)
    cdef double[::1] w = w_arr
    A_arr = np.zeros((cap + 2, cap + 2))
    cdef double[:, ::1] A = A_arr
    cdef bint in_s, all_pos, singular = False

    best = INFINITY
    scale = 0.0
    j0 = 0
    for a in range(N):
        norm = 0.0
        for c in range(d):
            s = v[a, c] - pt[c]
            norm += s * s
        if norm < best:
            best = norm
            j0 = a
        if norm > scale:
            scale = norm
    if scale < 1e-300:
        scale = 1e-300
    m = 1
    S[0] = j0
    lam[0] = 1.0
    for c in range(d):
        x[c] = v[j0, c] - pt[c]

    for it in range(max_iter):
        xx = 0.0
        for c in range(d):
            xx += x[c] * x[c]
        best = INFINITY
        j = 0
        for a in range(N):
            dot = 0.0
            for c in range(d):
                dot += (v[a, c] - pt[c]) * x[c]
            if dot < best:
                best = dot
                j = a
        if xx - best <= tol * scale:
            break
        in_s = False
        for a in range(m):
            if S[a] == j:
                in_s = True
        if in_s or m >= cap:
            break
        S[m] = j
        lam[m] = 0.0
        m += 1
        while True:
            # bordered system [QQ' 1; 1' 0][w; mu] = [0; 1]
            for a in range(m):
                for b in range(m):
                    s = 0.0
                    for c in range(d):
                        s += (v[S[a], c] - pt[c]) * (v[S[b], c] - pt[c])
                    A[a, b] = s
                A[a, m] = 1.0
                A[m, a] = 1.0
                w[a] = 0.0
            A[m, m] = 0.0
            w[m] = 1.0
            if _solve(A, w, m + 1) != 0:
                m -= 1
                singular = True
                break
            all_pos = True
            for a in range(m):
                if w[a] <= eps:
                    all_pos = False
            if all_pos:
                for a in range(m):
                    lam[a] = w[a]
                break
            theta = INFINITY
            argr = -1
            for a in range(m):
                if w[a] <= eps:
                    ratio = lam[a] / (lam[a] - w[a])
                    if ratio < theta:
                        theta = ratio
                        argr = a
            for a in range(m):
                lam[a] = (1.0 - theta) * lam[a] + theta * w[a]
            kk = 0
            total = 0.0
            for a in range(m):
                if lam[a] > eps and a != argr:
                    S[kk] = S[a]
                    lam[kk] = lam[a]
                    total += lam[a]
                    kk += 1
            m = kk
            for a in range(m):
                lam[a] /= total
            if m == 1:
                break
        for c in range(d):
            s = 0.0
            for a in range(m):
                s += lam[a] * (v[S[a], c] - pt[c])
            x[c] = s
        if singular:
            break

    xx = 0.0
    for c in range(d):
        xx += x[c] * x[c]
    return sqrt(xx), S_arr[:m].copy(), lam_arr[:m].copy()
