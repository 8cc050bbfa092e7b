"""Static convex cash-subadditive risk measures given by a finite dual dictionary.

A dictionary is a finite list of subprobabilities ``a_i Q_i`` with penalties
``c_i``; the risk of a position ``X`` is ``max_i a_i E_{Q_i}[-X] - c_i``.
The minimal penalty is the convex conjugate of that max-affine function, i.e.
the lower convex envelope of the points ``(a_i Q_i, c_i)``, which is computed
exactly by a small linear program.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .errors import (EmptyBattery, GridTooLarge, MassExceedsOne,
                     PenaltyNotNormalized, SpaceMismatch)
from .lp import hull_penalty
from .report import ConsistencyReport
from .tree import CONSTRUCTION_TOL, FilteredSpace, SubProbability


@dataclass(frozen=True)
class DualDictionary:
    a: np.ndarray
    Q: np.ndarray
    c: np.ndarray

    @classmethod
    def from_entries(cls, entries) -> "DualDictionary":
        """Build from ``(a, q, c)`` or ``(SubProbability, c)`` records."""
        a, Q, c = [], [], []
        for e in entries:
            if len(e) == 2:
                mu, cost = e
                a.append(mu.a)
                Q.append(np.asarray(mu.Q, dtype=float))
            else:
                ai, qi, cost = e
                a.append(ai)
                Q.append(np.asarray(qi, dtype=float))
            c.append(cost)
        return cls(np.asarray(a, float), np.vstack(Q), np.asarray(c, float))

    def __len__(self):
        return self.a.size

    @property
    def measures(self) -> np.ndarray:
        """Raw leaf weights ``a_i Q_i``, one row per entry."""
        return self.a[:, None] * self.Q


class StaticRiskMeasure:
    """rho(X) = max_i { a_i E_{Q_i}[-X] - c_i } over finite-penalty entries.

    ``normalize`` is ``"check"`` (default: require min c = 0), ``"shift"``
    (subtract the minimum) or ``"off"``.
    """

    def __init__(self, space: FilteredSpace, dictionary: DualDictionary,
                 normalize: str = "check", tol: float = CONSTRUCTION_TOL):
        self.space = space
        a = np.asarray(dictionary.a, dtype=float)
        Q = np.atleast_2d(np.asarray(dictionary.Q, dtype=float))
        c = np.asarray(dictionary.c, dtype=float)
        if Q.shape[1] != space.n_leaves:
            raise SpaceMismatch("dictionary measures do not match the tree")
        if np.any(a < -tol) or np.any(a > 1 + tol):
            raise ValueError("scalars a_i must lie in [0, 1]")
        if np.any(Q < 0) or np.any(np.abs(Q.sum(axis=1) - 1) > tol):
            raise ValueError("every Q_i must be a probability vector")
        if np.any(np.isnan(c)) or np.any(c == -np.inf):
            raise ValueError("penalties must be real or +inf")
        finite = np.isfinite(c)
        if not finite.any():
            raise ValueError("at least one entry needs a finite penalty")
        cmin = c[finite].min()
        if normalize == "shift":
            c = c - cmin
        elif normalize == "check" and abs(cmin) > tol:
            raise PenaltyNotNormalized(f"min penalty is {cmin!r}, expected 0")
        elif normalize == "check" and np.any(c < -tol):
            raise PenaltyNotNormalized("negative penalty")
        self.dictionary = DualDictionary(np.clip(a, 0, 1), Q, c)
        self._mu = self.dictionary.measures[finite]
        self._c = c[finite]

    def __call__(self, X) -> np.ndarray | float:
        X = self.space.check_vector(X, "X")
        vals = -(X @ self._mu.T) - self._c
        out = vals.max(axis=-1)
        return float(out) if out.ndim == 0 else out

    def vertices(self):
        """Finite-penalty measures and their penalties."""
        return self._mu.copy(), self._c.copy()


def eval_static_rho(rm: StaticRiskMeasure, X) -> float:
    return rm(X)


def decompose_subprobability(space: FilteredSpace, weights,
                             tol: float = CONSTRUCTION_TOL) -> SubProbability:
    w = space.check_vector(weights, "subprobability")
    if np.any(w < 0):
        raise ValueError("subprobability weights must be nonnegative")
    a = float(w.sum())
    if a > 1 + tol:
        raise MassExceedsOne(f"total mass {a!r} exceeds 1")
    if a == 0:
        return SubProbability(0.0, space.P.copy(), unique=False)
    return SubProbability(min(a, 1.0), w / a)


def _raw(space, mu) -> np.ndarray:
    if isinstance(mu, SubProbability):
        return space.check_vector(mu.weights(), "mu")
    w = space.check_vector(mu, "mu")
    if np.any(w < 0):
        raise ValueError("mu must be a nonnegative measure")
    return w


def minimal_penalty_static(rm: StaticRiskMeasure, mu) -> float:
    """Conjugate value sup_X {E_mu[-X] - rho(X)}; ``inf`` outside the hull.

    ``mu`` is a :class:`SubProbability` or raw nonnegative leaf weights (any
    total mass; mass above one always yields ``inf``).
    """
    target = _raw(rm.space, mu)
    pts, costs = rm.vertices()
    return hull_penalty(pts, costs, target)


def rebuild_from_minimal_penalty(rm: StaticRiskMeasure) -> StaticRiskMeasure:
    """Dictionary on the same vertex set carrying the minimal penalty."""
    d = rm.dictionary
    finite = np.isfinite(d.c)
    cbar = np.array([minimal_penalty_static(rm, m) for m in d.measures[finite]])
    return StaticRiskMeasure(rm.space,
                             DualDictionary(d.a[finite], d.Q[finite], cbar),
                             normalize="off")


# -- axiom checks ----------------------------------------------------------

def check_static_axioms(rho: Callable, space: FilteredSpace, battery,
                        lambdas: Sequence[float] = (0.25, 0.5, 0.75),
                        tol: float = 1e-12, name: str = "static-axioms"
                        ) -> ConsistencyReport:
    """Sampled convexity, monotonicity, cash-subadditivity and normalization.

    ``rho`` maps a batch of leaf vectors ``(B, L)`` to ``(B,)``. Cash-additivity
    is reported as an informational item.
    """
    B = np.atleast_2d(np.asarray(battery, dtype=float))
    if B.size == 0:
        raise EmptyBattery("battery is empty")
    space.check_vector(B, "battery")
    n = B.shape[0]
    rep = ConsistencyReport(name, tol)
    r = np.asarray(rho(B), dtype=float)
    Y = np.roll(B, -1, axis=0)
    rY = np.roll(r, -1)

    worst, wit = 0.0, {}
    for lam in lambdas:
        mix = np.asarray(rho(lam * B + (1 - lam) * Y))
        gap = mix - (lam * r + (1 - lam) * rY)
        k = int(np.argmax(gap))
        if gap[k] > worst or not wit:
            worst, wit = max(float(gap[k]), 0.0), {"id": k, "lambda": lam, "X": B[k], "Y": Y[k]}
    rep.add("convexity", worst, wit)

    upper = np.maximum(B, Y)
    gap = np.asarray(rho(upper)) - r
    k = int(np.argmax(gap))
    rep.add("monotonicity", max(float(gap[k]), 0.0), {"id": k, "X": B[k], "Y": upper[k]})

    scale = np.abs(B).max(axis=1)
    ms = np.unique(np.concatenate([[0.5, 1.0], scale, 0.5 * scale]))
    sub_worst, add_worst = 0.0, 0.0
    sub_wit, add_wit = {}, {}
    for m in ms:
        shifted = np.asarray(rho(B + m))
        sub = r - m - shifted              # must be <= 0
        add = np.abs(shifted - (r - m))
        k = int(np.argmax(sub))
        if sub[k] > sub_worst or not sub_wit:
            sub_worst, sub_wit = max(float(sub[k]), 0.0), {"id": k, "m": m, "X": B[k]}
        k = int(np.argmax(add))
        if add[k] > add_worst or not add_wit:
            add_worst, add_wit = float(add[k]), {"id": k, "m": m, "X": B[k]}
    rep.add("cash-subadditivity", sub_worst, sub_wit)
    rep.add("cash-additivity", add_worst, add_wit, informational=True)

    zero = np.zeros((1, space.n_leaves))
    rep.add("normalization", abs(float(np.asarray(rho(zero))[0])), {"X": zero[0]})

    consts = ms[:, None] * np.ones((1, space.n_leaves))
    up = -ms - np.asarray(rho(consts))        # rho(m) >= -m
    down = np.asarray(rho(-consts)) - ms      # rho(-m) <= m
    k1, k2 = int(np.argmax(up)), int(np.argmax(down))
    rep.add("constant-bounds", max(float(up[k1]), float(down[k2]), 0.0),
            {"m_low": ms[k1], "m_high": ms[k2]})
    rep.info["battery_size"] = n
    return rep


# -- brute-force conjugate oracle ------------------------------------------

def conjugate_grid_oracle(rm: StaticRiskMeasure, mu, box: float, n: int,
                          budget: int = 1_000_000, exhaustive_budget: int = 200_000,
                          seed: int = 0) -> float:
    """Lower bound on the minimal penalty by maximising over a grid of positions.

    The grid is ``n`` equally spaced points per leaf on ``[-box, box]``. Small
    grids are enumerated exhaustively; larger ones are searched by a smoothed
    ascent on the continuous box, snapped to the grid and polished by exact
    coordinate line searches along grid lines. The LP is never consulted.
    """
    if box <= 0 or n < 2:
        raise ValueError("need box > 0 and n >= 2")
    space = rm.space
    target = _raw(space, mu)
    L = space.n_leaves
    if L * n > budget:
        raise GridTooLarge(f"{L} leaves x {n} points exceeds budget {budget}")
    grid = np.linspace(-box, box, n)

    def objective(X):
        X = np.atleast_2d(X)
        return -(X @ target) - np.asarray(rm(X))

    if n ** L <= exhaustive_budget:
        best = -np.inf
        idx = np.indices((n,) * L).reshape(L, -1).T
        for chunk in np.array_split(idx, max(1, idx.shape[0] // 20000)):
            best = max(best, float(objective(grid[chunk]).max()))
        return best

    pts, costs = rm.vertices()
    rng = np.random.default_rng(seed)
    starts = [np.zeros(L)] + [rng.uniform(-box, box, L) for _ in range(3)]
    candidates = []
    for x0 in starts:
        x = x0
        for beta in (1.0, 10.0, 100.0, 1e3, 1e4):
            def f(X, beta=beta):
                z = beta * (-(pts @ X) - costs)
                val = -(X @ target) - logsumexp(z) / beta
                grad = -target + softmax(z) @ pts
                return -val, -grad
            res = minimize(f, x, jac=True, method="L-BFGS-B",
                           bounds=[(-box, box)] * L)
            x = res.x
        candidates.append(x)

    best_val = -np.inf
    for x in candidates:
        k = np.clip(np.rint((x + box) / (grid[1] - grid[0])), 0, n - 1).astype(int)
        val = float(objective(grid[k])[0])
        improved = True
        while improved:
            improved = False
            for j in range(L):
                trial = np.repeat(grid[k][None, :], n, axis=0)
                trial[:, j] = grid
                vals = objective(trial)
                kj = int(np.argmax(vals))
                if vals[kj] > val + 1e-15:
                    val, k[j], improved = float(vals[kj]), kj, True
        best_val = max(best_val, val)
    return best_val


def oracle_diverges(rm: StaticRiskMeasure, mu, n: int, boxes=(1.0, 10.0, 100.0),
                    seed: int = 0) -> tuple[bool, list[float]]:
    """Box-scaling test: does the grid oracle keep growing with the box?

    Inside the hull the oracle saturates once the box holds a maximiser.
    Outside it the objective grows linearly along a separating direction, so
    each tenfold box should add clearly more than the previous step did.
    """
    vals = [conjugate_grid_oracle(rm, mu, b, n, seed=seed) for b in boxes]
    steps = np.diff(vals)
    grows = bool(np.all(steps > 1e-9) and np.all(steps[1:] >= 2.0 * steps[:-1]))
    return grows, vals
