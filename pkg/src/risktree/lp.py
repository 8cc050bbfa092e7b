"""Small dense two-phase simplex solver.

Problems handled here have at most a few hundred rows and columns, so a
dense tableau in float64 is both fast enough and accurate to roughly 1e-14
on well-scaled data. Dantzig pricing is used until a run of degenerate
pivots is seen, after which Bland's rule takes over to rule out cycling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    fun: float

    @property
    def success(self):
        return self.status == OPTIMAL


class _Tableau:
    def __init__(self, T, basis, tol, max_iter):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.max_iter = max_iter

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j

    def run(self, n_cols):
        """Optimise the objective stored in the last row; False if unbounded."""
        T = self.T
        m = T.shape[0] - 1
        degenerate = 0
        for _ in range(self.max_iter):
            d = T[m, :n_cols]
            neg = np.flatnonzero(d < -self.tol)
            if neg.size == 0:
                return True
            if degenerate > 20:
                j = neg[0]
            else:
                j = neg[np.argmin(d[neg])]
            col = T[:m, j]
            pos = np.flatnonzero(col > self.tol)
            if pos.size == 0:
                return False
            ratios = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + self.tol * max(1.0, abs(best))]
            r = ties[np.argmin([self.basis[i] for i in ties])]
            degenerate = degenerate + 1 if T[r, -1] <= self.tol else 0
            self.pivot(r, j)
        raise RuntimeError("simplex iteration limit reached")


def solve_standard_form(c, A_eq, b_eq, tol: float = 1e-11,
                        max_iter: int = 100_000) -> LPResult:
    """Minimise ``c @ x`` subject to ``A_eq @ x = b_eq`` and ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A_eq, dtype=float)).copy()
    b = np.asarray(b_eq, dtype=float).copy()
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1

    # phase 1: artificial basis
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    tab = _Tableau(T, list(range(n, n + m)), tol, max_iter)
    tab.run(n + m)
    scale = max(1.0, np.abs(b).max(initial=0.0))
    if -tab.T[m, -1] > 1e3 * tol * scale:
        return LPResult(INFEASIBLE, None, np.inf)

    # drive remaining artificials out of the basis, dropping redundant rows
    keep = []
    for r in range(m):
        if tab.basis[r] >= n:
            cand = np.flatnonzero(np.abs(tab.T[r, :n]) > tol)
            if cand.size:
                tab.pivot(r, cand[0])
                keep.append(r)
        else:
            keep.append(r)
    rows = keep + [m]
    T2 = np.hstack([tab.T[rows][:, :n], tab.T[rows][:, -1:]])
    basis = [tab.basis[r] for r in keep]
    mm = len(keep)
    T2[mm, :] = 0.0
    T2[mm, :n] = c
    for i, j in enumerate(basis):
        T2[mm] -= c[j] * T2[i]
    tab2 = _Tableau(T2, basis, tol, max_iter)
    if not tab2.run(n):
        return LPResult(UNBOUNDED, None, -np.inf)
    x = np.zeros(n)
    for i, j in enumerate(tab2.basis):
        x[j] = tab2.T[i, -1]
    x[x < 0] = 0.0
    return LPResult(OPTIMAL, x, float(c @ x))


def hull_penalty(points, costs, target, tol: float = 1e-11) -> float:
    """Lower convex envelope of ``(points[i], costs[i])`` evaluated at ``target``.

    Returns ``min sum(l_i c_i)`` over convex weights with
    ``sum(l_i points[i]) = target``, or ``inf`` when ``target`` lies outside the
    convex hull of the points. Entries with infinite cost are ignored.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    costs = np.asarray(costs, dtype=float)
    target = np.asarray(target, dtype=float)
    finite = np.isfinite(costs)
    points, costs = points[finite], costs[finite]
    if points.shape[0] == 0:
        return np.inf
    A = np.vstack([points.T, np.ones(points.shape[0])])
    b = np.append(target, 1.0)
    res = solve_standard_form(costs, A, b, tol=tol)
    if res.status == INFEASIBLE:
        return np.inf
    if res.status != OPTIMAL:  # pragma: no cover - bounded by construction
        raise RuntimeError(f"hull LP ended with status {res.status}")
    # a convex combination never costs less than the cheapest vertex
    return max(res.fun, float(costs.min()))
