"""Dynamic convex cash-subadditive risk measures on a scenario tree.

A :class:`DualModel` holds a finite family of pairs ``(D, Q)``. ``D`` is a
discount array indexed by time pairs ``(t, u)`` and ``Q`` is a probability on
the leaves. The penalty table ``c`` has the same ``(t, u)`` indexing. All
per-pair tables are stored leaf-expanded: ``D[i, t, u]`` is a leaf vector
that must be constant on the atoms of time ``t``. Evaluation is

    rho_{t,u}(X) = max_i D_i[t,u] * E_{Q_i}[-X | F_t] - c_i[t,u]

atom by atom; entries with an infinite penalty are skipped on their atom.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (EmptyBattery, FactorOutOfRange, MassExceedsOne,
                     NotMeasurable, PenaltyNotNormalized, SpaceMismatch,
                     TimeOrderViolation)
from .lp import INFEASIBLE, OPTIMAL, hull_penalty, solve_standard_form
from .report import ConsistencyReport
from .tree import CONSTRUCTION_TOL, DEFAULT_TOL, FilteredSpace, SubProbability


def _times(space: FilteredSpace, t, u):
    u = space.T if u is None else int(u)
    t = int(t)
    if not (0 <= t <= u <= space.T):
        raise TimeOrderViolation(f"need 0 <= t <= u <= {space.T}, got t={t}, u={u}")
    return t, u


def _measurable_tol(x) -> float:
    return CONSTRUCTION_TOL * max(1.0, float(np.abs(x).max(initial=0.0)))


class RiskModel:
    """Anything exposing ``rho_{t,u}`` on a filtered space.

    Subclasses implement ``_nodes(X, t, u)`` for a batch ``X`` of shape
    ``(B, L)`` and return node values of shape ``(B, n_atoms(t))``.
    """

    space: FilteredSpace
    name = "model"

    def __init__(self, space: FilteredSpace):
        self.space = space
        self._cache: dict = {}
        self._lock = threading.Lock()

    def _nodes(self, X, t, u):  # pragma: no cover - abstract
        raise NotImplementedError

    def rho(self, X, t: int, u: int | None = None, check: bool = True) -> np.ndarray:
        """rho_{t,u}(X) as a leaf vector (or a batch of them)."""
        sp = self.space
        t, u = _times(sp, t, u)
        X = sp.check_vector(X, "X")
        single = X.ndim == 1
        Xb = np.atleast_2d(X)
        if check and u < sp.T:
            for row in Xb:
                if not sp.is_measurable(row, u, _measurable_tol(row)):
                    raise NotMeasurable(f"X is not F_{u}-measurable")
        if single:
            key = (Xb.tobytes(), t, u)
            hit = self._cache.get(key)
            if hit is not None:
                return hit.copy()
        out = sp.expand(self._nodes(Xb, t, u), t)
        if single:
            out = out[0]
            out.setflags(write=False)
            with self._lock:
                self._cache[key] = out
            return out.copy()
        return out

    __call__ = rho

    def project(self, X, u: int) -> np.ndarray:
        """E_P[X | F_u], the canonical F_u-measurable version of a battery."""
        return self.space.cond_exp(np.asarray(X, dtype=float), self.space.P, u)

    def clear_cache(self):
        with self._lock:
            self._cache.clear()


class DualModel(RiskModel):
    """Finite dual family ``{(D_i, Q_i)}`` with penalty table ``c_i[t, u]``.

    ``D`` and ``c`` have shape ``(N, T+1, T+1, L)``; only ``t <= u`` slices
    are meaningful. ``normalize`` is ``"check"`` (default) or ``"off"``.
    """

    name = "dual"

    def __init__(self, space: FilteredSpace, D, Q, c, normalize: str = "check",
                 tol: float = CONSTRUCTION_TOL, names: Sequence[str] | None = None):
        super().__init__(space)
        T1, L = space.T + 1, space.n_leaves
        D = np.array(D, dtype=float)
        Q = np.atleast_2d(np.array(Q, dtype=float))
        c = np.array(c, dtype=float)
        N = Q.shape[0]
        if N == 0:
            raise ValueError("a dual model needs at least one pair")
        if Q.shape[1] != L or D.shape != (N, T1, T1, L) or c.shape != (N, T1, T1, L):
            raise SpaceMismatch("pair tables do not match the tree")
        if np.any(Q < 0) or np.any(np.abs(Q.sum(axis=1) - 1) > tol):
            raise ValueError("every Q must be a probability vector")
        iu = np.triu_indices(T1)
        Dv = D[:, iu[0], iu[1]]
        if np.any(~np.isfinite(Dv)) or np.any(Dv < -tol) or np.any(Dv > 1 + tol):
            raise FactorOutOfRange("discounts must lie in [0, 1]")
        cv = c[:, iu[0], iu[1]]
        if np.any(np.isnan(cv)) or np.any(cv < -tol):
            raise ValueError("penalties must be nonnegative or +inf")
        for t, u in zip(*iu):
            for i in range(N):
                if not space.is_measurable(D[i, t, u], t, tol):
                    raise NotMeasurable(f"D[{i}] at ({t},{u}) is not F_{t}-measurable")
                if not space.is_measurable(c[i, t, u], t, tol):
                    raise NotMeasurable(f"c[{i}] at ({t},{u}) is not F_{t}-measurable")
        self.D = np.clip(D, 0.0, 1.0)
        self.Q = Q
        self.c = np.where(c < 0, 0.0, c)
        for arr in (self.D, self.Q, self.c):
            arr.setflags(write=False)
        self.names = list(names) if names is not None else [f"p{i}" for i in range(N)]
        self.all_Q_equivalent = bool(np.all(Q > 0))
        self.normalize = normalize
        if normalize == "check":
            gap = self.normalization_gap()
            if gap > tol:
                raise PenaltyNotNormalized(f"min penalty over pairs is {gap!r} on some atom")

    @property
    def n_pairs(self) -> int:
        return self.Q.shape[0]

    def normalization_gap(self) -> float:
        """Largest nodewise min_i c_i[t, u] over all time pairs."""
        T1 = self.space.T + 1
        worst = 0.0
        for t in range(T1):
            for u in range(t, T1):
                worst = max(worst, float(self.c[:, t, u].min(axis=0).max()))
        return worst

    @classmethod
    def conditional_expectation(cls, space: FilteredSpace) -> "DualModel":
        """Single pair D = 1, Q = P, c = 0, so rho_{t,u}(X) = E_P[-X | F_t]."""
        T1, L = space.T + 1, space.n_leaves
        return cls(space, np.ones((1, T1, T1, L)), space.P[None, :],
                   np.zeros((1, T1, T1, L)), names=["P"])

    def with_penalty(self, c, normalize="off") -> "DualModel":
        return DualModel(self.space, self.D, self.Q, c, normalize=normalize,
                         names=self.names)

    def conditional_law(self, t: int, u: int) -> np.ndarray:
        """Q_i(B | A) for atoms B of time u inside atoms A of time t, shape (N, n_u).

        Q-null atoms use P conditionally, matching the expectation convention.
        """
        sp = self.space
        qu = sp.atom_sum(self.Q, u)
        pu = sp.atom_mass(u)
        anc = sp.ancestor(u, t)
        qA = sp.atom_sum(self.Q, t)[:, anc]
        pA = sp.atom_mass(t)[anc]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(qA > 0, qu / np.where(qA > 0, qA, 1.0), pu / pA)

    def _nodes(self, X, t, u):
        sp = self.space
        st = sp.starts[t]
        num = sp.atom_sum(X[:, None, :] * self.Q[None], t)      # (B, N, n_t)
        den = sp.atom_sum(self.Q, t)                            # (N, n_t)
        pce = sp.atom_sum(X * sp.P, t) / sp.atom_mass(t)        # (B, n_t)
        safe = np.where(den > 0, den, 1.0)
        ce = np.where(den > 0, num / safe, pce[:, None, :])
        Dn = self.D[:, t, u, st]
        cn = self.c[:, t, u, st]
        vals = Dn * (-ce) - cn
        vals = np.where(np.isfinite(cn), vals, -np.inf)
        return vals.max(axis=1)

    def pair_terms(self, X, t, u):
        """Per-pair affine terms D E_Q[-X|F_t] - c as node values, shape (N, n_t)."""
        X = self.space.check_vector(X, "X")
        sp = self.space
        ce = np.stack([sp.node_values(sp.cond_exp(-X, q, t), t) for q in self.Q])
        st = sp.starts[t]
        return self.D[:, t, u, st] * ce - self.c[:, t, u, st]


def eval_dynamic_rho(model: RiskModel, X, t: int, u: int | None = None) -> np.ndarray:
    return model.rho(X, t, u)


def product_form_discount(space: FilteredSpace, factors) -> np.ndarray:
    """Discount table ``D[t, u] = prod_{r=t}^{u-1} factors[r]``.

    ``factors[r]`` is a leaf vector in [0, 1]. Each product must come out
    F_t-measurable; use constant factors beyond the first period for a
    family whose discounts are genuinely random at the root only.
    """
    T, L = space.T, space.n_leaves
    f = np.array(factors, dtype=float).reshape(T, L) if T else np.zeros((0, L))
    if np.any(f < 0) or np.any(f > 1):
        raise FactorOutOfRange("one-period factors must lie in [0, 1]")
    D = np.zeros((T + 1, T + 1, L))
    for t in range(T + 1):
        acc = np.ones(L)
        D[t, t] = acc
        for u in range(t + 1, T + 1):
            acc = acc * f[u - 1]
            if not space.is_measurable(acc, t):
                raise NotMeasurable(f"D[{t},{u}] is not F_{t}-measurable")
            D[t, u] = acc
    return D


# -- conjugates ------------------------------------------------------------

def _resolve_pair(model: DualModel, pair, t, u):
    """Return node values of D_{t,u} and the measure Q for ``pair``."""
    sp = model.space
    if isinstance(pair, (int, np.integer)):
        return model.D[pair, t, u, sp.starts[t]], model.Q[pair]
    Dv, Q = pair
    Dv = np.asarray(Dv, dtype=float)
    if Dv.ndim == 4 or Dv.ndim == 3:
        Dv = Dv[..., t, u, :] if Dv.ndim == 3 else Dv[0, t, u]
    Dv = sp.check_vector(np.broadcast_to(Dv, (sp.n_leaves,)), "D")
    sp.require_measurable(Dv, t, "D")
    Q = sp.check_vector(Q, "Q")
    return sp.node_values(Dv, t), Q


def minimal_penalty_dynamic(model: DualModel, pair, t: int, u: int | None = None
                            ) -> np.ndarray:
    """Conjugate penalty of ``rho_{t,u}`` at ``pair`` as a leaf vector.

    ``pair`` is a pair index or ``(D_{t,u} leaf vector, Q)``. Each atom of
    time ``t`` is handled by its own hull LP over the measures
    ``D_i(A) Q_i(. | A)`` restricted to the atoms of time ``u`` below ``A``.
    """
    sp = model.space
    t, u = _times(sp, t, u)
    Dn, Q = _resolve_pair(model, pair, t, u)
    anc = sp.ancestor(u, t)
    law = model.conditional_law(t, u)                       # (N, n_u)
    qu = sp.atom_sum(Q, u)
    qA = sp.atom_sum(Q, t)[anc]
    pu, pA = sp.atom_mass(u), sp.atom_mass(t)[anc]
    target_law = np.where(qA > 0, qu / np.where(qA > 0, qA, 1.0), pu / pA)
    out = np.empty(sp.n_atoms(t))
    for A in range(sp.n_atoms(t)):
        cols = np.flatnonzero(anc == A)
        pts = model.D[:, t, u, sp.starts[t][A]][:, None] * law[:, cols]
        costs = model.c[:, t, u, sp.starts[t][A]]
        out[A] = hull_penalty(pts, costs, Dn[A] * target_law[cols])
    return sp.expand(out, t)


def minimal_penalty_table(model: DualModel) -> np.ndarray:
    """Minimal penalty of every member at every time pair, same shape as ``c``."""
    out = np.full(model.c.shape, np.inf)
    T1 = model.space.T + 1
    for i in range(model.n_pairs):
        for t in range(T1):
            for u in range(t, T1):
                out[i, t, u] = minimal_penalty_dynamic(model, i, t, u)
    return out


# -- axioms ----------------------------------------------------------------

def _time_pairs(space, pairs=None):
    if pairs is not None:
        return [tuple(p) for p in pairs]
    return [(t, u) for t in space.times for u in space.times if t <= u]


def check_dynamic_axioms(model: RiskModel, battery, time_pairs=None,
                         lambdas=(0.25, 0.5, 0.75), tol: float = 1e-12,
                         seed: int = 0) -> ConsistencyReport:
    """Nodewise convexity, monotonicity, cash-subadditivity and normalization.

    Battery members are projected onto F_u for each time pair. Shifts ``m_t``
    are both constants and random nonnegative F_t-measurable vectors.
    Cash-additivity is informational. For dual models the identity
    ``rho_t(X + m) + m = max_i m(1 - D_i) + D_i E_i[-X|F_t] - c_i`` is checked.
    """
    sp = model.space
    B0 = np.atleast_2d(np.asarray(battery, dtype=float))
    if B0.size == 0:
        raise EmptyBattery("battery is empty")
    sp.check_vector(B0, "battery")
    rng = np.random.default_rng(seed)
    rep = ConsistencyReport("axioms", tol)
    acc = {k: (0.0, {}) for k in ("convexity", "monotonicity", "cash-subadditivity",
                                   "cash-additivity", "normalization", "shift-identity")}

    def bump(key, gap, wit):
        k = int(np.argmax(gap))
        v = float(gap.flat[k])
        if v > acc[key][0] or not acc[key][1]:
            acc[key] = (max(v, 0.0), wit(k))

    for t, u in _time_pairs(sp, time_pairs):
        B = model.project(B0, u)
        n = B.shape[0]
        r = sp.node_values(model.rho(B, t, u), t)
        perm = rng.permutation(n)
        Y, rY = B[perm], r[perm]
        for lam in lambdas:
            mix = sp.node_values(model.rho(lam * B + (1 - lam) * Y, t, u), t)
            gap = (mix - lam * r - (1 - lam) * rY).max(axis=1)
            bump("convexity", gap, lambda k: {"id": k, "t": t, "u": u, "lambda": lam,
                                               "X": B[k], "Y": Y[k]})
        up = np.maximum(B, Y)
        gap = (sp.node_values(model.rho(up, t, u), t) - r).max(axis=1)
        bump("monotonicity", gap, lambda k: {"id": k, "t": t, "u": u, "X": B[k], "Y": up[k]})

        scale = np.abs(B).max(axis=1, keepdims=True) + 1.0
        m_const = np.ones((n, sp.n_leaves)) * rng.uniform(0, 1, (n, 1)) * scale
        m_rand = sp.expand(rng.uniform(0, 1, (n, sp.n_atoms(t))), t) * scale
        for m in (m_const, m_rand):
            shifted = sp.node_values(model.rho(B + m, t, u), t)
            mn = sp.node_values(m, t)
            sub = (r - mn - shifted).max(axis=1)
            bump("cash-subadditivity", sub, lambda k: {"id": k, "t": t, "u": u,
                                                        "X": B[k], "m": m[k]})
            add = np.abs(shifted - (r - mn)).max(axis=1)
            bump("cash-additivity", add, lambda k: {"id": k, "t": t, "u": u,
                                                     "X": B[k], "m": m[k]})
            if isinstance(model, DualModel):
                st = sp.starts[t]
                Dn, cn = model.D[:, t, u, st], model.c[:, t, u, st]
                gaps = np.empty(n)
                for k in range(n):
                    ce = np.stack([sp.node_values(sp.cond_exp(-B[k], q, t), t)
                                   for q in model.Q])
                    terms = mn[k] * (1 - Dn) + Dn * ce - cn
                    terms = np.where(np.isfinite(cn), terms, -np.inf)
                    gaps[k] = np.abs(terms.max(axis=0) - (shifted[k] + mn[k])).max()
                bump("shift-identity", gaps, lambda k: {"id": k, "t": t, "u": u,
                                                         "X": B[k], "m": m[k]})
        z = sp.node_values(model.rho(np.zeros(sp.n_leaves), t, u), t)
        bump("normalization", np.abs(z)[None, :].max(axis=1),
             lambda k: {"t": t, "u": u, "X": np.zeros(sp.n_leaves)})

    for key, (v, w) in acc.items():
        if key == "shift-identity" and not isinstance(model, DualModel):
            continue
        rep.add(key, v, w, informational=(key == "cash-additivity"))
    rep.info["battery_size"] = int(B0.shape[0])
    return rep


def check_regularity(model: RiskModel, battery, u: int | None = None,
                     tol: float = DEFAULT_TOL) -> ConsistencyReport:
    """rho_t(X 1_A + Y 1_{A^c}) = 1_A rho_t(X) + 1_{A^c} rho_t(Y).

    ``battery`` holds ``(X, Y, A, t)`` records with ``A`` a leaf mask in F_t.
    """
    sp = model.space
    u = sp.T if u is None else u
    rep = ConsistencyReport("regularity", tol)
    worst, wit = 0.0, {}
    if not len(battery):
        raise EmptyBattery("battery is empty")
    for k, (X, Y, A, t) in enumerate(battery):
        A = sp.require_event(A, t)
        X, Y = model.project(X, u), model.project(Y, u)
        lhs = model.rho(np.where(A, X, Y), t, u)
        rhs = np.where(A, model.rho(X, t, u), model.rho(Y, t, u))
        v = float(np.abs(lhs - rhs).max())
        if v > worst or not wit:
            worst, wit = v, {"id": k, "t": t, "X": X, "Y": Y, "A": A}
    rep.add("regularity", worst, wit)
    return rep


# -- decomposition and aggregation ----------------------------------------

@dataclass(frozen=True)
class DiscountDecomposition:
    D: np.ndarray          # a * Z_t, F_t-measurable
    Q_tilde: np.ndarray
    Z_t: np.ndarray
    null: np.ndarray       # leaf mask of {Z_t = 0}
    bound_checked: bool


def discount_decomposition(space: FilteredSpace, mu, t: int, certified: bool = False,
                           tol: float = CONSTRUCTION_TOL) -> DiscountDecomposition:
    """Write ``mu = D_t * Q~`` with ``Q~ = P`` on F_t.

    ``certified=True`` asserts the caller knows the aggregated penalty at
    ``mu`` is finite; only then is ``D_t <= 1`` enforced.
    """
    if isinstance(mu, SubProbability):
        a, Q = float(mu.a), space.check_vector(mu.Q, "Q")
    else:
        w = space.check_vector(mu, "mu")
        a = float(w.sum())
        if a > 1 + tol:
            raise MassExceedsOne(f"total mass {a!r} exceeds 1")
        Q = w / a if a > 0 else space.P.copy()
    if a > 1 + tol:
        raise MassExceedsOne(f"total mass {a!r} exceeds 1")
    Z_T = Q / space.P
    Z_t = space.cond_exp(Z_T, space.P, t)
    null = Z_t <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        Qt = np.where(null, space.P, Q / np.where(null, 1.0, Z_t))
    D = a * Z_t
    if certified and np.any(D > 1 + tol):
        raise FactorOutOfRange(f"D_t reaches {D.max()!r} despite finite penalty")
    return DiscountDecomposition(D, Qt, Z_t, null, certified)


class AggregatedRisk:
    """X -> E_P[rho_{t,u}(X)], a static functional on the leaves."""

    def __init__(self, model: RiskModel, t: int, u: int | None = None):
        self.model = model
        self.space = model.space
        self.t, self.u = _times(model.space, t, u)

    def __call__(self, X):
        X = self.space.check_vector(X, "X")
        Xp = self.model.project(X, self.u)
        return self.space.expectation(self.model.rho(Xp, self.t, self.u, check=False))

    def minimal_penalty(self, mu) -> float:
        """Conjugate of the aggregate at a raw measure, via one joint LP.

        Weights ``w[i, A]`` carry pair ``i`` on atom ``A``: they sum to
        ``P(A)`` on each atom and their discounted conditional laws add up
        to ``mu`` on the atoms of time ``u``. The cost is ``sum w c``.
        """
        model = self.model
        if not isinstance(model, DualModel):
            raise TypeError("the aggregated conjugate needs a dual model")
        sp = self.space
        t, u = self.t, self.u
        w = mu.weights() if isinstance(mu, SubProbability) else np.asarray(mu, float)
        w = sp.check_vector(w, "mu")
        if np.any(w < 0):
            raise ValueError("mu must be a nonnegative measure")
        if w.sum() > 1 + CONSTRUCTION_TOL:
            return np.inf
        target = sp.atom_sum(w, u)
        if u < sp.T and not sp.is_measurable(w / sp.P, u, 1e-12):
            # mu sees information beyond F_u: no member can reproduce it
            return np.inf
        anc = sp.ancestor(u, t)
        law = model.conditional_law(t, u)
        st = sp.starts[t]
        nA, nU, N = sp.n_atoms(t), sp.n_atoms(u), model.n_pairs
        cols, costs = [], []
        A_eq = []
        for i in range(N):
            for A in range(nA):
                cost = model.c[i, t, u, st[A]]
                if not np.isfinite(cost):
                    continue
                col = np.zeros(nA + nU)
                col[A] = 1.0
                sel = anc == A
                col[nA:][sel] = model.D[i, t, u, st[A]] * law[i, sel]
                A_eq.append(col)
                costs.append(cost)
                cols.append((i, A))
        if not cols:
            return np.inf
        A_eq = np.array(A_eq).T
        b = np.concatenate([sp.atom_mass(t), target])
        res = solve_standard_form(np.array(costs), A_eq, b)
        if res.status == INFEASIBLE:
            return np.inf
        if res.status != OPTIMAL:  # pragma: no cover
            raise RuntimeError(res.status)
        return float(res.fun)


def aggregate_rho0t(model: RiskModel, t: int, u: int | None = None) -> AggregatedRisk:
    return AggregatedRisk(model, t, u)


@dataclass(frozen=True)
class AggregationVerdict:
    lhs: float
    rhs: float
    gap: float
    passed: bool


def induced_subprobability(model: DualModel, pair, t: int, u: int | None = None
                           ) -> np.ndarray:
    """Leaf weights of X -> E_P[D_{t,u} E_Q[X|F_t]] on the atoms of time u.

    Spread over leaves proportionally to P within each atom of time u.
    """
    sp = model.space
    t, u = _times(sp, t, u)
    Dn, Q = _resolve_pair(model, pair, t, u)
    anc = sp.ancestor(u, t)
    qu = sp.atom_sum(Q, u)
    qA = sp.atom_sum(Q, t)[anc]
    pu, pA = sp.atom_mass(u), sp.atom_mass(t)[anc]
    law = np.where(qA > 0, qu / np.where(qA > 0, qA, 1.0), pu / pA)
    mass_u = pA * Dn[anc] * law
    return sp.expand(mass_u / pu, u) * sp.P


def penalty_aggregation_check(model: DualModel, pair, t: int, u: int | None = None,
                              tol: float = DEFAULT_TOL) -> AggregationVerdict:
    """E_P[minimal penalty of rho_{t,u} at pair] vs the aggregated conjugate."""
    cbar = minimal_penalty_dynamic(model, pair, t, u)
    lhs = float(np.inf) if np.any(np.isinf(cbar)) else float(model.space.expectation(cbar))
    mu = induced_subprobability(model, pair, t, u)
    rhs = aggregate_rho0t(model, t, u).minimal_penalty(mu)
    if np.isinf(lhs) or np.isinf(rhs):
        gap = 0.0 if (np.isinf(lhs) and np.isinf(rhs)) else np.inf
    else:
        gap = abs(lhs - rhs)
    return AggregationVerdict(lhs, rhs, gap, gap <= tol)


def lift_static(rm) -> DualModel:
    """Dynamic model whose time-0 slice is a static dictionary.

    Entry i becomes a pair with D_{0,u} = a_i, Q = Q_i and c_{0,u} = c_i;
    later slices are D = 1, c = 0, so rho_{0,u} on F_u-measurable X uses the
    dictionary restricted to F_u.
    """
    sp = rm.space
    d = rm.dictionary
    N, T1, L = len(d), sp.T + 1, sp.n_leaves
    D = np.ones((N, T1, T1, L))
    c = np.zeros((N, T1, T1, L))
    for i in range(N):
        D[i, 0, 1:] = d.a[i]
        c[i, 0, 1:] = d.c[i]
    return DualModel(sp, D, d.Q, c, names=[f"e{i}" for i in range(N)])
