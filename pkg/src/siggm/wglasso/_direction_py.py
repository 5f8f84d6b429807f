"""Pure-python Newton-direction coordinate descent.

Fallback for the compiled kernel in ``_direction_fast``; same contract,
same sweep order, bit-identical arithmetic on the same inputs.
"""

import numpy as np


def newton_direction(Winv, S, Wt, X, D, U, rows, cols, n_sweeps, tol):
    """Coordinate descent on the penalized quadratic model of the objective.

    Minimizes  tr((S - Winv) D) + 1/2 tr(Winv D Winv D) + |X + D|_{1,Wt}
    over symmetric D supported on the active coordinates (rows[k], cols[k]),
    rows[k] <= cols[k].  D and U = D @ Winv are updated in place.  Returns
    the largest coordinate move of the final sweep.
    """
    max_move = 0.0
    for _ in range(n_sweeps):
        max_move = 0.0
        for i, j in zip(rows, cols):
            if i == j:
                a = Winv[i, i] * Winv[i, i]
                b = S[i, i] - Winv[i, i] + float(Winv[i] @ U[:, i])
            else:
                a = Winv[i, j] * Winv[i, j] + Winv[i, i] * Winv[j, j]
                b = S[i, j] - Winv[i, j] + float(Winv[i] @ U[:, j])
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
                U[i] += mu * Winv[j]
                if i != j:
                    D[j, i] += mu
                    U[j] += mu * Winv[i]
                move = abs(mu)
                if move > max_move:
                    max_move = move
        if max_move <= tol:
            break
    return max_move
