"""Structural conditions on dual families: pasting, bifurcation, penalties.

Constructors build the measures and discounts required by the closure
conditions; verifiers re-check the defining identities on an indicator
basis. Closure checks compare the model's own members against every
target built from them, using exact signature matching on the conditional
laws of the tree.

A model's pair list plays the role of the product of a discount family and
a measure family. Closure targets must be realised by pairs of the model.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .dynamic import DualModel, product_form_discount
from .errors import FactorOutOfRange, PreconditionNotMet
from .report import ConsistencyReport
from .tree import CONSTRUCTION_TOL, DEFAULT_TOL, FilteredSpace

CLOSURE_TOL = 1e-12
_ROUND = 9


# -- constructors ----------------------------------------------------------

def _cond_factor(space, Q, t):
    """Z_T / Z_t for Q, with 1 on Q-null atoms of time t (P-fallback)."""
    Q = np.asarray(Q, dtype=float)
    Qt = space.expand(space.atom_sum(Q, t), t)
    Pt = space.expand(space.atom_mass(t), t)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(Qt > 0, (Q / np.where(Qt > 0, Qt, 1.0)) * Pt / space.P, 1.0)


def paste_measures(space: FilteredSpace, Q1, Q2, s: int, t: int) -> np.ndarray:
    """Q* with Q1's law up to time t and Q2's conditional law after it.

    The density is Z1_t * Z2_T / Z2_t; where Z2_t vanishes, P's conditional
    law is used, matching the expectation convention.
    """
    if s > t:
        raise ValueError("pasting needs s <= t")
    Q1 = space.check_vector(Q1, "Q1")
    Q2 = space.check_vector(Q2, "Q2")
    Z1t = space.expand(space.atom_sum(Q1, t) / space.atom_mass(t), t)
    return space.P * Z1t * _cond_factor(space, Q2, t)


def bifurcate_measures(space: FilteredSpace, Q1, Q2, A, s: int) -> np.ndarray:
    """Q* following Q1 inside the F_s-event A and Q2 outside it."""
    A = space.require_event(A, s)
    Q1 = space.check_vector(Q1, "Q1")
    Q2 = space.check_vector(Q2, "Q2")
    q = np.where(A, Q1, Q2)
    total = q.sum()
    if total <= 0:
        return space.P.copy()
    return q / total


def bifurcate_discounts(space: FilteredSpace, D1, D2, A, s: int, t: int | None = None
                        ) -> np.ndarray:
    """D*_{s,t} = 1_A D1_{s,t} + 1_{A^c} D2_{s,t} as a leaf vector."""
    A = space.require_event(A, s)
    D1 = space.check_vector(D1, "D1")
    D2 = space.check_vector(D2, "D2")
    space.require_measurable(D1, s, "D1")
    space.require_measurable(D2, s, "D2")
    out = np.where(A, D1, D2)
    if np.any(out < 0) or np.any(out > 1):
        raise FactorOutOfRange("discounts must lie in [0, 1]")
    return out


def joint_paste(space: FilteredSpace, D1_st, Q1, D2_tu, Q2, s: int, t: int, u: int):
    """(D*_{s,u}, Q*) with D* E_{Q*}[X|F_s] = D1 E_{Q1}[D2 E_{Q2}[X|F_t] | F_s].

    With Q^p the pasting of Q1 and Q2 at t and k = E_{Q^p}[D2 | F_s], the
    result is D* = D1 k and Q* = Q^p reweighted by D2 / k on atoms where k > 0.
    """
    if not s <= t <= u:
        raise ValueError("joint pasting needs s <= t <= u")
    D1 = space.check_vector(D1_st, "D1")
    D2 = space.check_vector(D2_tu, "D2")
    space.require_measurable(D1, s, "D1")
    space.require_measurable(D2, t, "D2")
    Qp = paste_measures(space, Q1, Q2, s, t)
    k = space.cond_exp(D2, Qp, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        Qs = np.where(k > 0, Qp * D2 / np.where(k > 0, k, 1.0), Qp)
    Qs = Qs / Qs.sum()
    Dstar = D1 * k
    if np.any(Dstar < -CONSTRUCTION_TOL) or np.any(Dstar > 1 + CONSTRUCTION_TOL):
        raise FactorOutOfRange("joint pasting left [0, 1]")
    return np.clip(Dstar, 0.0, 1.0), Qs


# -- defect verifiers (indicator basis) -----------------------------------

def _basis(space, u):
    return np.eye(space.n_atoms(u))[:, space.labels[u]]


def _live(space, Q, s):
    return space.expand(space.atom_sum(Q, s), s) > 0


def pasting_defect(space, Qstar, Q1, Q2, s, t, u=None) -> float:
    """Max gap of the pasting identity over indicators of the atoms of time u.

    Atoms of time s that Q1 does not charge are skipped: there both sides
    are fixed by convention only.
    """
    u = space.T if u is None else u
    live = _live(space, Q1, s)
    worst = 0.0
    for e in _basis(space, u):
        lhs = space.cond_exp(e, Qstar, s)
        rhs = space.cond_exp(space.cond_exp(e, Q2, t), Q1, s)
        worst = max(worst, float(np.abs(lhs - rhs)[live].max(initial=0.0)))
    return worst


def bifurcation_defect(space, Qstar, Q1, Q2, A, s, t=None) -> float:
    t = space.T if t is None else t
    A = space.require_event(A, s)
    live = np.where(A, _live(space, Q1, s), _live(space, Q2, s))
    worst = 0.0
    for e in _basis(space, t):
        lhs = space.cond_exp(e, Qstar, s)
        rhs = np.where(A, space.cond_exp(e, Q1, s), space.cond_exp(e, Q2, s))
        worst = max(worst, float(np.abs(lhs - rhs)[live].max(initial=0.0)))
    return worst


def joint_paste_defect(space, Dstar, Qstar, D1, Q1, D2, Q2, s, t, u) -> float:
    live = _live(space, Q1, s)
    worst = 0.0
    for e in _basis(space, u):
        lhs = Dstar * space.cond_exp(e, Qstar, s)
        rhs = D1 * space.cond_exp(D2 * space.cond_exp(e, Q2, t), Q1, s)
        worst = max(worst, float(np.abs(lhs - rhs)[live].max(initial=0.0)))
    return worst


# -- penalties -------------------------------------------------------------

def _mul0(a, b):
    """Product with the convention 0 * inf = 0."""
    with np.errstate(invalid="ignore"):
        return np.where(a == 0, 0.0, a * b)


def build_cocycle_penalty(space: FilteredSpace, one_step, D, Q) -> np.ndarray:
    """Penalty table from one-period terms by backward recursion.

    ``one_step`` has shape ``(N, T, L)`` (or broadcastable), entry ``r`` being
    F_r-measurable and nonnegative. The table satisfies c[t, t] = 0 and
    c[s, u] = pi_s + E_Q[D_{s,s+1} c[s+1, u] | F_s].
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    N, L, T = Q.shape[0], space.n_leaves, space.T
    D = np.broadcast_to(np.asarray(D, dtype=float), (N, T + 1, T + 1, L))
    pi = np.broadcast_to(np.asarray(one_step, dtype=float), (N, T, L))
    if np.any(pi < 0) or np.any(np.isnan(pi)):
        raise ValueError("one-step penalties must be nonnegative")
    for i in range(N):
        for r in range(T):
            space.require_measurable(pi[i, r], r, f"one-step penalty {i} at {r}")
    c = np.zeros((N, T + 1, T + 1, L))
    for i in range(N):
        for u in range(T + 1):
            for s in range(u - 1, -1, -1):
                inner = _mul0(D[i, s, s + 1], c[i, s + 1, u])
                fin = np.isfinite(inner)
                ce = space.cond_exp(np.where(fin, inner, 0.0), Q[i], s)
                # an infinite value on a charged leaf propagates
                bad = space.cond_exp((~fin).astype(float), Q[i], s) > 0
                c[i, s, u] = pi[i, s] + np.where(bad, np.inf, ce)
    return c


def _all_triples(T):
    return [(s, t, u) for s in range(T + 1) for t in range(s, T + 1)
            for u in range(t, T + 1)]


def check_cocycle(model: DualModel, triples=None, tol: float = DEFAULT_TOL
                  ) -> ConsistencyReport:
    """c_{s,u} = c_{s,t} + E_Q[D_{s,t} c_{t,u} | F_s] for every pair and triple."""
    sp = model.space
    rep = ConsistencyReport("cocycle", tol)
    triples = _all_triples(sp.T) if triples is None else [tuple(x) for x in triples]
    for s, t, u in triples:
        worst, wit = 0.0, {}
        for i in range(model.n_pairs):
            inner = _mul0(model.D[i, s, t], model.c[i, t, u])
            fin = np.isfinite(inner)
            ce = sp.cond_exp(np.where(fin, inner, 0.0), model.Q[i], s)
            bad = sp.cond_exp((~fin).astype(float), model.Q[i], s) > 0
            rhs = model.c[i, s, t] + np.where(bad, np.inf, ce)
            lhs = model.c[i, s, u]
            both_inf = np.isinf(lhs) & np.isinf(rhs)
            with np.errstate(invalid="ignore"):
                gap = np.where(both_inf, 0.0, np.abs(lhs - rhs))
            k = int(np.argmax(gap))
            if gap[k] > worst or not wit:
                worst = float(gap[k])
                wit = {"id": i, "pair": model.names[i], "atom": int(sp.labels[s][k]),
                       "lhs": float(lhs[k]), "rhs": float(rhs[k])}
        rep.add(f"({s},{t},{u})", worst, wit)
    return rep


# -- signature matching ----------------------------------------------------

def _key(row):
    return np.round(np.asarray(row, dtype=float), _ROUND).tobytes()


class _RowIndex:
    """Exact lookup of float rows with a brute-force fallback."""

    def __init__(self, rows):
        self.rows = np.atleast_2d(np.asarray(rows, dtype=float))
        self.table = {}
        for i, r in enumerate(self.rows):
            self.table.setdefault(_key(r), i)

    def find(self, row):
        """(index, distance) of the nearest stored row."""
        i = self.table.get(_key(row))
        if i is not None:
            d = float(np.abs(self.rows[i] - row).max(initial=0.0))
            if d <= CLOSURE_TOL:
                return i, d
        dist = np.abs(self.rows - row).max(axis=1)
        j = int(np.argmin(dist))
        return j, float(dist[j])


def _distinct(rows):
    rows = np.atleast_2d(rows)
    _, idx = np.unique(np.round(rows, _ROUND), axis=0, return_index=True)
    return np.sort(idx)


class _Closure:
    def __init__(self, rep, scope, tol=CLOSURE_TOL, max_misses=200):
        self.rep, self.scope, self.tol = rep, scope, tol
        self.worst, self.wit, self.n, self.misses = 0.0, {}, 0, 0
        self.max_misses = max_misses
        self.table = []

    def test(self, index: _RowIndex, target, witness):
        if self.misses >= self.max_misses:
            return
        self.n += 1
        j, d = index.find(target)
        if d > self.tol:
            self.misses += 1
        else:
            self.table.append((witness, j))
        if d > self.worst or not self.wit:
            self.worst, self.wit = d, {**witness, "nearest": j}

    def close(self):
        self.wit["targets"] = self.n
        self.rep.add(self.scope, self.worst, self.wit)
        return self.table


def distinct_measures(model: DualModel):
    return _distinct(model.Q)


def distinct_discounts(model: DualModel):
    T1 = model.space.T + 1
    flat = model.D.reshape(model.n_pairs, T1 * T1 * model.space.n_leaves)
    return _distinct(flat)


def check_positivity(model: DualModel) -> ConsistencyReport:
    """(Qa): every member measure charges every leaf."""
    rep = ConsistencyReport("Qa", 0.0)
    low = model.Q.min(axis=1)
    k = int(np.argmin(low))
    rep.add("equivalence", float(max(0.0, -low[k])) if low[k] > 0 else 1.0,
            {"id": k, "min_weight": float(low[k])})
    return rep


def check_penalty_type(model: DualModel, tol: float = CONSTRUCTION_TOL) -> ConsistencyReport:
    """(Ca): c_{s,t} nonnegative (inf allowed) and F_s-measurable."""
    sp = model.space
    rep = ConsistencyReport("Ca", tol)
    worst, wit = 0.0, {}
    for i in range(model.n_pairs):
        for s in sp.times:
            for t in range(s, sp.T + 1):
                c = model.c[i, s, t]
                neg = float(max(0.0, -c.min()))
                meas = 0.0 if sp.is_measurable(c, s) else 1.0
                v = max(neg, meas)
                if v > worst or not wit:
                    worst, wit = v, {"id": i, "s": s, "t": t}
    rep.add("type", worst, wit)
    return rep


def check_product_family(model: DualModel) -> ConsistencyReport:
    """Every combination of a member discount and a member measure is a pair."""
    rep = ConsistencyReport("product", 0.0)
    di, qi = distinct_discounts(model), distinct_measures(model)
    T1 = model.space.T + 1
    flat = model.D.reshape(model.n_pairs, -1)
    dk = {_key(flat[i]): n for n, i in enumerate(di)}
    qk = {_key(model.Q[i]): n for n, i in enumerate(qi)}
    seen = {(dk[_key(flat[i])], qk[_key(model.Q[i])]) for i in range(model.n_pairs)}
    missing = len(di) * len(qi) - len(seen)
    rep.add("combinations", float(missing), {"discounts": len(di), "measures": len(qi),
                                             "pairs": model.n_pairs})
    return rep


def check_pasting_closure(model: DualModel, tol: float = CLOSURE_TOL) -> ConsistencyReport:
    """(Qb): every pasting of two member measures is a member measure.

    Conditional laws given F_s on the leaves are compared; X measurable at
    the horizon is the strongest case, and s = t or t = T are trivial.
    """
    sp = model.space
    rep = ConsistencyReport("Qb", tol)
    qi = distinct_measures(model)
    tables = {}
    for s in range(sp.T + 1):
        idx = _RowIndex(model.conditional_law(s, sp.T)[qi])
        for t in range(s + 1, sp.T):
            up = model.conditional_law(s, t)[qi]
            down = model.conditional_law(t, sp.T)[qi]
            a = _distinct(up)
            b = _distinct(down)
            anc = sp.labels[t]
            cl = _Closure(rep, f"({s},{t})", tol)
            for i, j in itertools.product(a, b):
                cl.test(idx, up[i][anc] * down[j], {"Q1": int(qi[i]), "Q2": int(qi[j]),
                                                    "s": s, "t": t})
            tables[(s, t)] = cl.close()
    if not rep.items:
        rep.add("trivial", 0.0, {})
    rep.info["tables"] = {str(k): len(v) for k, v in tables.items()}
    return rep


def check_bifurcation_closure(model: DualModel, tol: float = CLOSURE_TOL
                              ) -> ConsistencyReport:
    """(Qc): splicing two members across one atom of time s stays in the family.

    Closure under single-atom splices gives closure for every F_s-event by
    repeated splicing.
    """
    sp = model.space
    rep = ConsistencyReport("Qc", tol)
    qi = distinct_measures(model)
    for s in range(1, sp.T):
        law = model.conditional_law(s, sp.T)[qi]
        idx = _RowIndex(law)
        cl = _Closure(rep, f"s={s}", tol)
        for a in range(sp.n_atoms(s)):
            inside = sp.labels[s] == a
            ins = _distinct(law[:, inside])
            outs = _distinct(law[:, ~inside])
            for i, j in itertools.product(ins, outs):
                target = np.where(inside, law[i], law[j])
                cl.test(idx, target, {"Q1": int(qi[i]), "Q2": int(qi[j]), "atom": a})
        cl.close()
    if not rep.items:
        rep.add("trivial", 0.0, {})
    return rep


def check_discount_bifurcation(model: DualModel, tol: float = CLOSURE_TOL
                               ) -> ConsistencyReport:
    """(Da): D_{s,t} spliced across one atom of time s is realised by a member."""
    sp = model.space
    rep = ConsistencyReport("Da", tol)
    di = distinct_discounts(model)
    for s in range(1, sp.T + 1):
        for t in range(s, sp.T + 1):
            vals = model.D[di, s, t][:, sp.starts[s]]
            idx = _RowIndex(vals)
            cl = _Closure(rep, f"({s},{t})", tol)
            for a in range(sp.n_atoms(s)):
                m = np.arange(sp.n_atoms(s)) == a
                for i, j in itertools.product(_distinct(vals[:, m]), _distinct(vals[:, ~m])):
                    cl.test(idx, np.where(m, vals[i], vals[j]),
                            {"D1": int(di[i]), "D2": int(di[j]), "atom": a})
            cl.close()
    if not rep.items:
        rep.add("trivial", 0.0, {})
    return rep


def check_joint_pasting(model: DualModel, tol: float = CLOSURE_TOL) -> ConsistencyReport:
    """(QDa): joint pastings are realised by pairs, plus the degenerate clause.

    On the atoms of time u the target measure is l(w) r(v) with
    l = D1_{s,t} Q1(w | F_s) and r = D2_{t,u} Q2(v | F_t); a pair realises it
    when D_{s,u} Q(v | F_s) matches. The degenerate clause asks every pair to
    realise its own self-pasting.
    """
    sp = model.space
    rep = ConsistencyReport("QDa", tol)
    N = model.n_pairs
    for s, t, u in _all_triples(sp.T):
        if not (s < t < u):
            continue
        anc_t = sp.ancestor(u, t)
        lt = model.D[:, s, t][:, sp.starts[t]] * model.conditional_law(s, t)   # (N, n_t)
        ru = model.D[:, t, u][:, sp.starts[u]] * model.conditional_law(t, u)   # (N, n_u)
        mem = model.D[:, s, u][:, sp.starts[u]] * model.conditional_law(s, u)
        idx = _RowIndex(mem)
        cl = _Closure(rep, f"({s},{t},{u})", tol)
        for i, j in itertools.product(_distinct(lt), _distinct(ru)):
            cl.test(idx, lt[i][anc_t] * ru[j], {"pair1": int(i), "pair2": int(j)})
        cl.close()
        self_gap = np.abs(mem - lt[:, anc_t] * ru).max(axis=1)
        k = int(np.argmax(self_gap))
        rep.add(f"self({s},{t},{u})", float(self_gap[k]), {"id": k})
    if not rep.items:
        rep.add("trivial", 0.0, {})
    return rep


def check_locality(model: DualModel, tol: float = DEFAULT_TOL) -> ConsistencyReport:
    """(Cb): pairs agreeing on an atom of time s (discount and conditional law
    up to time t) carry the same penalty c_{s,t} there.

    Every premise instance on the model is enumerated by grouping pairs on
    each atom; the spread of penalties inside a group is the violation.
    """
    sp = model.space
    rep = ConsistencyReport("Cb", tol)
    for s in sp.times:
        for t in range(s + 1, sp.T + 1):
            law = model.conditional_law(s, t)
            anc = sp.ancestor(t, s)
            worst, wit = 0.0, {}
            for a in range(sp.n_atoms(s)):
                leaf = sp.starts[s][a]
                sig = np.column_stack([model.D[:, s, t, leaf], law[:, anc == a]])
                c = model.c[:, s, t, leaf]
                groups: dict = {}
                for i in range(model.n_pairs):
                    groups.setdefault(_key(sig[i]), []).append(i)
                for members in groups.values():
                    if len(members) < 2:
                        continue
                    ref = members[0]
                    same = [m for m in members
                            if np.abs(sig[m] - sig[ref]).max() <= CLOSURE_TOL]
                    vals = c[same]
                    if np.all(np.isinf(vals)):
                        continue
                    spread = float(vals.max() - vals.min()) if np.all(np.isfinite(vals)) \
                        else np.inf
                    if spread > worst or not wit:
                        hi, lo = same[int(np.argmax(vals))], same[int(np.argmin(vals))]
                        worst, wit = spread, {"pair1": hi, "pair2": lo, "atom": a,
                                              "c1": float(c[hi]), "c2": float(c[lo])}
            rep.add(f"({s},{t})", worst, wit)
    return rep


# -- structured models and the recursivity harness ------------------------

CONDITIONS = ("Qa", "Qb", "Qc", "Da", "QDa", "Ca", "Cb", "Cc")


@dataclass
class StructuredModel:
    """A dual model plus how it was assembled and its closure reports."""
    model: DualModel
    meta: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    @property
    def space(self):
        return self.model.space

    def conditions(self, tol: float = DEFAULT_TOL) -> dict:
        if not self.reports:
            m = self.model
            self.reports = {
                "Qa": check_positivity(m),
                "Qb": check_pasting_closure(m),
                "Qc": check_bifurcation_closure(m),
                "Da": check_discount_bifurcation(m),
                "QDa": check_joint_pasting(m),
                "Ca": check_penalty_type(m),
                "Cb": check_locality(m, tol),
                "Cc": check_cocycle(m, tol=tol),
            }
        return self.reports


def structure_model(model: DualModel, **meta) -> StructuredModel:
    return StructuredModel(model, dict(meta))


def verify_theorem_tc(structured: StructuredModel, battery, tol: float = DEFAULT_TOL,
                      raise_on_precondition: bool = True) -> ConsistencyReport:
    """Run every structural check, then recursivity on the battery.

    If a condition fails the theorem does not apply and
    :class:`PreconditionNotMet` is raised. A recursivity failure after all
    conditions passed points at a bug in a checker or a closure gap.
    """
    from .timecons import check_strong_tc

    reps = structured.conditions(tol)
    out = ConsistencyReport("theorem", tol)
    failed = []
    for name in CONDITIONS:
        r = reps[name]
        it = r.worst_item
        out.add(f"condition:{name}", r.worst if it else 0.0,
                {"scope": it.scope if it else "", **(it.witness if it else {})},
                tol=r.tol)
        if not r.passed:
            failed.append(name)
    if failed:
        if raise_on_precondition:
            raise PreconditionNotMet(f"conditions failed: {', '.join(failed)}",
                                     [reps[n] for n in failed])
        return out
    strong = check_strong_tc(structured.model, battery, tol=tol)
    it = strong.worst_item
    out.add("recursivity", strong.worst, {"scope": it.scope if it else "",
                                         **(it.witness if it else {})})
    out.info["recursivity"] = strong.summary()
    return out


# -- generators ------------------------------------------------------------

def rectangular_model(space: FilteredSpace, menus, root_discounts=(1.0,),
                      root_penalties=None, later_factors=None,
                      normalize: str = "check") -> StructuredModel:
    """Product family over per-node transition menus and a root discount choice.

    ``menus[t][a]`` is a list of ``(q, pi)`` options at atom ``a`` of time
    ``t``: ``q`` a strictly positive law over the children, ``pi`` a
    nonnegative one-period penalty. Every policy (one option per node) is
    combined with every root discount ``delta``. Discounts are
    ``D_{t,u} = prod_{r=t}^{u-1} f_r`` with ``f_0 = delta`` and common
    constants ``f_r = later_factors[r - 1]`` for ``r >= 1``.
    """
    T, L = space.T, space.n_leaves
    later = np.ones(max(T - 1, 0)) if later_factors is None else np.asarray(later_factors, float)
    root_penalties = np.zeros(len(root_discounts)) if root_penalties is None \
        else np.asarray(root_penalties, float)
    nodes = [(t, a) for t in range(T) for a in range(space.n_atoms(t))]
    for t, a in nodes:
        for q, _ in menus[t][a]:
            if len(q) != space.children(t, a).size:
                raise ValueError(f"menu at ({t},{a}) has the wrong number of children")
    choices = [range(len(menus[t][a])) for t, a in nodes]
    Qs, pis, labels = [], [], []
    for policy in itertools.product(*choices):
        trans = np.ones(L)
        pi = np.zeros((T, L))
        for (t, a), k in zip(nodes, policy):
            q, p = menus[t][a][k]
            kids = space.children(t, a)
            for child, w in zip(kids, q):
                trans[space.labels[t + 1] == child] *= w
            pi[t][space.labels[t] == a] = p
        Qs.append(trans if T else space.P.copy())
        pis.append(pi)
        labels.append("".join(str(k) for k in policy))
    Qs = [q / q.sum() for q in Qs]
    D_list, Q_list, pi_list, names = [], [], [], []
    for d, (delta, kappa) in enumerate(zip(root_discounts, root_penalties)):
        factors = np.vstack([np.full(L, delta)] + [np.full(L, f) for f in later]) \
            if T else np.zeros((0, L))
        Dtab = product_form_discount(space, factors)
        for q, pi, lab in zip(Qs, pis, labels):
            p = pi.copy()
            if T:
                p[0] = p[0] + kappa
            D_list.append(Dtab)
            Q_list.append(q)
            pi_list.append(p)
            names.append(f"d{d}:{lab}")
    D = np.stack(D_list)
    Q = np.stack(Q_list)
    c = build_cocycle_penalty(space, np.stack(pi_list), D, Q)
    model = DualModel(space, D, Q, c, normalize=normalize, names=names)
    return StructuredModel(model, {"kind": "rectangular", "menus": menus,
                                   "root_discounts": list(root_discounts),
                                   "root_penalties": list(root_penalties),
                                   "later_factors": list(later)})


def random_structured_model(rng: np.random.Generator, max_pairs: int = 512,
                            max_horizon: int = 3, max_leaves: int = 27,
                            discounted: bool = True) -> StructuredModel:
    """Random rectangular family on a random uniform tree.

    Transition options per node come from a random grid of positive laws
    with distinct values; one option per node is free, the rest carry a
    random one-period penalty.
    """
    from .tree import TreeSpec, build_tree

    while True:
        T = int(rng.integers(2, max_horizon + 1))
        branching = [int(b) for b in rng.integers(2, 4, size=T)]
        if int(np.prod(branching)) <= max_leaves:
            break
    raw = rng.dirichlet(np.ones(int(np.prod(branching))) * 5.0)
    spec0 = TreeSpec.uniform(branching)
    space = build_tree(TreeSpec(spec0.horizon, spec0.branching, tuple(raw / raw.sum())))
    n_root = 2 if discounted else 1
    budget = max_pairs // n_root
    menus, n_pol = [], 1
    for t in range(T):
        level = []
        for a in range(space.n_atoms(t)):
            k = space.children(t, a).size
            size = int(rng.integers(1, 4))
            while size > 1 and n_pol * size > budget:
                size -= 1
            n_pol *= size
            opts = []
            for j in range(size):
                q = rng.dirichlet(np.ones(k) * 2.0) * 0.9 + 0.1 / k
                pen = 0.0 if j == 0 else float(rng.uniform(0.1, 0.5))
                opts.append((q / q.sum(), pen))
            level.append(opts)
        menus.append(level)
    if discounted:
        roots = (1.0, float(rng.choice([0.5, 0.75])))
        root_pen = (0.0, float(rng.uniform(0.0, 0.3)))
        later = rng.choice([1.0, 0.5, 0.9], size=max(T - 1, 0))
    else:
        roots, root_pen, later = (1.0,), (0.0,), np.ones(max(T - 1, 0))
    return rectangular_model(space, menus, roots, root_pen, later)


# -- ablation --------------------------------------------------------------

@dataclass(frozen=True)
class Ablation:
    model: DualModel
    pair: int
    s: int
    u: int
    atom: int
    delta: float
    X0: np.ndarray


def ablate_penalty(model: DualModel, delta: float, rng: np.random.Generator,
                   tries: int = 500) -> Ablation:
    """Lower one penalty entry c_{s,u} on one atom by ``delta``.

    The entry is chosen so that its pair attains rho_{s,u}(X0) on that atom
    for a random ``X0``, with u - s >= 2 and the entry at least ``delta``.
    The result stays nonnegative and normalized, and rho_{s,u}(X0) rises by
    exactly ``delta`` there while every shorter horizon is untouched.
    """
    sp = model.space
    if sp.T < 2:
        raise ValueError("ablation needs a horizon of at least 2")
    spans = [(s, u) for s in range(sp.T + 1) for u in range(s + 2, sp.T + 1)]
    for _ in range(tries):
        s, u = spans[int(rng.integers(len(spans)))]
        X0 = model.project(rng.normal(size=sp.n_leaves) * rng.uniform(0.5, 5.0), u)
        terms = model.pair_terms(X0, s, u)
        best = terms.max(axis=0)
        a = int(rng.integers(sp.n_atoms(s)))
        leaf = sp.starts[s][a]
        cand = np.flatnonzero((terms[:, a] >= best[a] - 1e-15)
                              & (model.c[:, s, u, leaf] >= delta))
        if cand.size == 0:
            continue
        m = int(cand[0])
        c = model.c.copy()
        c[m, s, u, sp.labels[s] == a] -= delta
        broken = DualModel(sp, model.D, model.Q, c, normalize="off", names=model.names)
        return Ablation(broken, m, s, u, a, float(delta), X0)
    raise RuntimeError("no visible penalty entry of the requested size found")
