# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Newton-direction coordinate descent (hot inner loop).

Mirrors ``_direction_py.newton_direction`` exactly; keep the two in sync.
"""

import numpy as np
cimport numpy as cnp


def newton_direction(double[:, ::1] Winv, double[:, ::1] S, double[:, ::1] Wt,
                     double[:, ::1] X, double[:, ::1] D, double[:, ::1] U,
                     int[::1] rows, int[::1] cols, int n_sweeps, double tol):
    cdef Py_ssize_t p = Winv.shape[0]
    cdef Py_ssize_t n_active = rows.shape[0]
    cdef Py_ssize_t s, k, i, j, t
    cdef double a, b, c, lam, f, mu, move, max_move, dot

    max_move = 0.0
    for s in range(n_sweeps):
        max_move = 0.0
        for k in range(n_active):
            i = rows[k]
            j = cols[k]
            dot = 0.0
            for t in range(p):
                dot += Winv[i, t] * U[t, j]
            if i == j:
                a = Winv[i, i] * Winv[i, i]
                b = S[i, i] - Winv[i, i] + dot
            else:
                a = Winv[i, j] * Winv[i, j] + Winv[i, i] * Winv[j, j]
                b = S[i, j] - Winv[i, j] + dot
            c = X[i, j] + D[i, j]
            lam = Wt[i, j] / a
            f = c - b / a
            if f > lam:
                mu = -c + f - lam
            elif f < -lam:
                mu = -c + f + lam
            else:
                mu = -c
            if mu != 0.0:
                D[i, j] += mu
                for t in range(p):
                    U[i, t] += mu * Winv[j, t]
                if i != j:
                    D[j, i] += mu
                    for t in range(p):
                        U[j, t] += mu * Winv[i, t]
                move = mu if mu >= 0.0 else -mu
                if move > max_move:
                    max_move = move
        if max_move <= tol:
            break
    return max_move
