"""Strong, weak and weak* time-consistency checks and their relations.

Weak notions quantify over all pairs of positions, which no finite search
can cover. Pairs are therefore constructed so that the premise has a fair
chance to hold (shifts, rescalings, subtree swaps, constancy and
redistribution pairs), the premise is re-checked numerically, and the
number of non-vacuous tests is reported and compared to a floor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamic import RiskModel, check_dynamic_axioms
from .errors import EmptyBattery, InsufficientNonVacuousPairs
from .report import ConsistencyReport
from .tree import DEFAULT_TOL, FilteredSpace

PREMISE_TOL = 1e-9
CONCLUSION_TOL = 1e-7


def _battery(space, battery):
    B = np.atleast_2d(np.asarray(battery, dtype=float))
    if B.size == 0:
        raise EmptyBattery("battery is empty")
    return space.check_vector(B, "battery")


def _nodes(model, X, t, u):
    return model.space.node_values(model.rho(X, t, u), t)


def random_battery(space: FilteredSpace, n: int, rng: np.random.Generator,
                   scale: float = 2.0) -> np.ndarray:
    """Gaussian positions with a few constants mixed in."""
    B = rng.normal(size=(n, space.n_leaves)) * scale
    k = min(n, max(1, n // 10))
    B[:k] = rng.uniform(-scale, scale, size=(k, 1))
    return B


# -- strong ----------------------------------------------------------------

def strong_triples(T: int):
    """All s <= t <= u with s < u; s = t = u carries no recursion."""
    return [(s, t, u) for s in range(T + 1) for t in range(s, T + 1)
            for u in range(t, T + 1) if s < u]


def check_strong_tc(model: RiskModel, battery, triples=None,
                    tol: float = DEFAULT_TOL) -> ConsistencyReport:
    """rho_{s,u}(X) = rho_{s,t}(-rho_{t,u}(X)) nodewise for every triple."""
    sp = model.space
    B0 = _battery(sp, battery)
    rep = ConsistencyReport("strong", tol)
    triples = strong_triples(sp.T) if triples is None else [tuple(x) for x in triples]
    for s, t, u in triples:
        B = model.project(B0, u)
        one = model.rho(B, s, u)
        inner = model.rho(B, t, u)
        two = model.rho(-inner, s, t)
        gap = np.abs(one - two).max(axis=1)
        k = int(np.argmax(gap))
        leaf = int(np.argmax(np.abs(one[k] - two[k])))
        rep.add(f"({s},{t},{u})", float(gap[k]),
                {"id": k, "X": B[k], "atom": int(sp.labels[s][leaf]),
                 "direct": float(one[k, leaf]), "two_step": float(two[k, leaf])})
    rep.info["battery_size"] = int(B0.shape[0])
    return rep


def check_constancy(model: RiskModel, t: int, m_battery, u: int | None = None,
                    tol: float = DEFAULT_TOL) -> ConsistencyReport:
    """rho_{t,u}(m) = -m for F_t-measurable m."""
    sp = model.space
    M = _battery(sp, m_battery)
    for m in M:
        sp.require_measurable(m, t, "m")
    rep = ConsistencyReport("constancy", tol)
    r = model.rho(M, t, u)
    gap = np.abs(r + M).max(axis=1)
    k = int(np.argmax(gap))
    rep.add(f"t={t}", float(gap[k]), {"id": k, "m": M[k], "rho": r[k]})
    return rep


def constancy_battery(space: FilteredSpace, t: int, n: int, rng) -> np.ndarray:
    """Constants and random F_t-measurable vectors of both signs."""
    const = np.linspace(-2, 2, max(2, n // 2))[:, None] * np.ones(space.n_leaves)
    rand = space.expand(rng.uniform(-2, 2, (n - const.shape[0], space.n_atoms(t))), t)
    return np.vstack([const, rand])


# -- pair generators -------------------------------------------------------

def sibling_swaps(space: FilteredSpace) -> list[np.ndarray]:
    """Leaf permutations exchanging two sibling subtrees of equal shape."""
    perms = []
    for r in range(space.T):
        for a in range(space.n_atoms(r)):
            kids = space.children(r, a)
            for i in range(len(kids)):
                for j in range(i + 1, len(kids)):
                    li = np.flatnonzero(space.labels[r + 1] == kids[i])
                    lj = np.flatnonzero(space.labels[r + 1] == kids[j])
                    if li.size != lj.size or not _same_shape(space, li, lj):
                        continue
                    p = np.arange(space.n_leaves)
                    p[li], p[lj] = lj, li
                    perms.append(p)
    return perms


def _same_shape(space, li, lj):
    for t in range(space.T + 1):
        if np.unique(space.labels[t][li]).size != np.unique(space.labels[t][lj]).size:
            return False
    return True


@dataclass
class PairBattery:
    X: np.ndarray
    Y: np.ndarray
    kind: list

    def __len__(self):
        return self.X.shape[0]


def weak_pairs(space: FilteredSpace, battery, rng: np.random.Generator,
               n_random: int | None = None) -> PairBattery:
    """Shift, rescaling, swap and random pairs built from a battery."""
    B = _battery(space, battery)
    n = B.shape[0]
    Xs, Ys, kinds = [], [], []

    def push(X, Y, kind):
        Xs.append(X)
        Ys.append(Y)
        kinds.extend([kind] * X.shape[0])

    m = np.abs(rng.normal(size=B.shape)) * rng.uniform(0, 1, (n, 1))
    push(B, B - m, "shift")
    const = rng.uniform(0, 1, (n, 1)) * np.ones_like(B)
    push(B, B - const, "shift-const")
    lam = rng.uniform(0, 3, (n, 1))
    push(B, lam * B, "scale")
    perms = sibling_swaps(space)
    if perms:
        idx = rng.integers(len(perms), size=n)
        push(B, np.stack([B[k][perms[i]] for k, i in enumerate(idx)]), "swap")
    n_random = n if n_random is None else n_random
    a, b = rng.integers(n, size=n_random), rng.integers(n, size=n_random)
    push(B[a], B[b], "random")
    return PairBattery(np.vstack(Xs), np.vstack(Ys), kinds)


def weak_star_pairs(space: FilteredSpace, battery, rng: np.random.Generator
                    ) -> PairBattery:
    """Swap pairs; constancy and redistribution pairs are added per time."""
    B = _battery(space, battery)
    perms = sibling_swaps(space)
    if not perms:
        return PairBattery(np.empty((0, space.n_leaves)), np.empty((0, space.n_leaves)), [])
    Xs, Ys = [], []
    for k, X in enumerate(B):
        p = perms[k % len(perms)]
        Xs.append(X)
        Ys.append(X[p])
    return PairBattery(np.array(Xs), np.array(Ys), ["swap"] * len(Xs))


def _redistribution(space, B, t, rng):
    """Y = X + zeta with E_P[zeta | F_t] = 0, keeping Y <= 0 where X <= 0."""
    Xn = -np.abs(B)
    z = rng.normal(size=B.shape)
    z = z - space.cond_exp(z, space.P, t)
    room = np.abs(Xn).min(axis=1, keepdims=True)
    scale = np.where(np.abs(z).max(axis=1, keepdims=True) > 0,
                     room / np.maximum(np.abs(z).max(axis=1, keepdims=True), 1e-300), 0.0)
    return Xn, Xn + 0.5 * scale * z


# -- weak and weak* ---------------------------------------------------------

def _pairs_from(pairs, space):
    if isinstance(pairs, PairBattery):
        return pairs.X, pairs.Y, list(pairs.kind)
    X = np.array([p[0] for p in pairs], dtype=float)
    Y = np.array([p[1] for p in pairs], dtype=float)
    return space.check_vector(X, "X"), space.check_vector(Y, "Y"), ["given"] * len(X)


def _order_test(model, X, Y, kinds, rep, equality, counts, s_range, premise_tol,
                conclusion_tol, t, u, store):
    """Both orientations of every pair at (t, u); conclusions at s in s_range."""
    sp = model.space
    X, Y = model.project(X, u), model.project(Y, u)
    rX = {s: _nodes(model, X, s, u) for s in list(s_range) + [t]}
    rY = {s: _nodes(model, Y, s, u) for s in list(s_range) + [t]}
    for a, b, ra, rb, tag in ((X, Y, rX, rY, "XY"), (Y, X, rY, rX, "YX")):
        if equality and tag == "YX":
            continue
        if equality:
            prem = np.all(np.abs(ra[t] - rb[t]) <= premise_tol, axis=1)
        else:
            prem = np.all(ra[t] >= rb[t] - premise_tol, axis=1)
        idx = np.flatnonzero(prem)
        counts["nonvacuous"] += int(idx.size)
        counts["vacuous"] += int((~prem).sum())
        for s in s_range:
            if idx.size == 0:
                continue
            if equality:
                gap = np.abs(ra[s] - rb[s])[idx].max(axis=1)
            else:
                gap = np.maximum(rb[s] - ra[s], 0.0)[idx].max(axis=1)
            k = int(np.argmax(gap))
            key = (t, u)
            if gap[k] > store.get(key, (-1.0,))[0]:
                i = int(idx[k])
                premise = float(np.abs(ra[t][i] - rb[t][i]).max())
                store[key] = (float(gap[k]), {"id": i, "kind": kinds[i], "s": s,
                                              "orientation": tag, "X": a[i], "Y": b[i],
                                              "premise_gap": premise})


def _finish(rep, store, counts, keys, min_nonvacuous, name):
    for key in keys:
        if key in store:
            v, w = store[key]
            rep.add(f"({key[0]},{key[1]})", v, w)
        else:
            rep.add(f"({key[0]},{key[1]})", 0.0, {}, vacuous=True)
    rep.info.update(counts)
    if counts["nonvacuous"] < min_nonvacuous:
        raise InsufficientNonVacuousPairs(counts["nonvacuous"], min_nonvacuous, name)
    return rep


def weak_keys(T):
    """(t, u) with 1 <= t <= u: the conclusion runs over s < t."""
    return [(t, u) for u in range(1, T + 1) for t in range(1, u + 1)]


def check_weak_tc(model: RiskModel, pairs=None, battery=None, seed: int = 0,
                  min_nonvacuous: int = 100, premise_tol: float = PREMISE_TOL,
                  tol: float = CONCLUSION_TOL, include_constancy: bool = True
                  ) -> ConsistencyReport:
    """rho_{t,u}(X) >= rho_{t,u}(Y) implies rho_{s,u}(X) >= rho_{s,u}(Y), s < t.

    Each (pair, orientation, t, u) whose premise holds counts as one
    non-vacuous test. With ``include_constancy`` the pairs
    (X, -rho_{t,u}(X)) are added for every battery member.
    """
    sp = model.space
    rng = np.random.default_rng(seed)
    if pairs is None:
        if battery is None:
            raise EmptyBattery("need pairs or a battery")
        pairs = weak_pairs(sp, battery, rng)
    X, Y, kinds = _pairs_from(pairs, sp)
    if X.shape[0] == 0:
        raise EmptyBattery("no pairs")
    rep = ConsistencyReport("weak", tol)
    counts = {"nonvacuous": 0, "vacuous": 0}
    store: dict = {}
    for t, u in weak_keys(sp.T):
        _order_test(model, X, Y, kinds, rep, False, counts, range(t), premise_tol, tol,
                    t, u, store)
        if include_constancy and battery is not None:
            B = model.project(_battery(sp, battery), u)
            C = -model.rho(B, t, u)
            _order_test(model, B, C, ["constancy"] * len(B), rep, False, counts,
                        range(t), premise_tol, tol, t, u, store)
    rep.info["premise_tol"] = premise_tol
    rep.info["scope_note"] = "conclusion tested for s < t"
    return _finish(rep, store, counts, weak_keys(sp.T), min_nonvacuous, "weak")


def check_weak_star_tc(model: RiskModel, pairs=None, battery=None, seed: int = 0,
                       min_nonvacuous: int = 20, premise_tol: float = PREMISE_TOL,
                       tol: float = CONCLUSION_TOL) -> ConsistencyReport:
    """rho_{t,u}(X) = rho_{t,u}(Y) implies rho_{s,u}(X) = rho_{s,u}(Y), s < t.

    Besides the given pairs, constancy pairs (X, -rho_{t,u}(X)) and
    redistribution pairs on nonpositive positions are built per time.
    """
    sp = model.space
    rng = np.random.default_rng(seed)
    if pairs is None:
        if battery is None:
            raise EmptyBattery("need pairs or a battery")
        pairs = weak_star_pairs(sp, battery, rng)
    X, Y, kinds = _pairs_from(pairs, sp)
    rep = ConsistencyReport("weakstar", tol)
    counts = {"nonvacuous": 0, "vacuous": 0}
    store: dict = {}
    for t, u in weak_keys(sp.T):
        if X.shape[0]:
            _order_test(model, X, Y, kinds, rep, True, counts, range(t), premise_tol,
                        tol, t, u, store)
        if battery is not None:
            B = model.project(_battery(sp, battery), u)
            C = -model.rho(B, t, u)
            _order_test(model, B, C, ["constancy"] * len(B), rep, True, counts,
                        range(t), premise_tol, tol, t, u, store)
            Xn, Yn = _redistribution(sp, B, t, rng)
            _order_test(model, Xn, Yn, ["redistribution"] * len(B), rep, True, counts,
                        range(t), premise_tol, tol, t, u, store)
    rep.info["premise_tol"] = premise_tol
    return _finish(rep, store, counts, weak_keys(sp.T), min_nonvacuous, "weakstar")


# -- implications ----------------------------------------------------------

def check_sign_inequalities(model: RiskModel, battery, tol: float = DEFAULT_TOL
                            ) -> ConsistencyReport:
    """rho_s(X) <= rho_s(-rho_t(X)) where rho_t(X) <= 0, and >= where rho_t(X) >= 0.

    Only battery members whose rho_t has one sign on every atom are used;
    counts per case are reported.
    """
    sp = model.space
    B = _battery(sp, battery)
    rep = ConsistencyReport("sign-inequalities", tol)
    worst = {"le": (0.0, {}), "ge": (0.0, {})}
    n = {"le": 0, "ge": 0, "strict": 0}
    for t in range(1, sp.T + 1):
        rt = model.rho(B, t)
        inner = -rt
        for s in range(t):
            direct = model.rho(B, s)
            two = model.rho(inner, s, t)
            for case, mask, gap in (("le", np.all(rt <= 0, axis=1), direct - two),
                                    ("ge", np.all(rt >= 0, axis=1), two - direct)):
                idx = np.flatnonzero(mask)
                n[case] += int(idx.size)
                if idx.size == 0:
                    continue
                g = gap[idx].max(axis=1)
                n["strict"] += int((np.abs(direct - two)[idx].max(axis=1) > tol).sum())
                k = int(np.argmax(g))
                if g[k] > worst[case][0] or not worst[case][1]:
                    i = int(idx[k])
                    worst[case] = (max(float(g[k]), 0.0),
                                   {"id": i, "s": s, "t": t, "X": B[i],
                                    "direct": direct[i], "two_step": two[i]})
    for case in ("le", "ge"):
        v, w = worst[case]
        rep.add(f"rho_t {'<=' if case == 'le' else '>='} 0", v, w, vacuous=(n[case] == 0))
    rep.info.update({"n_le": n["le"], "n_ge": n["ge"], "n_strict": n["strict"]})
    return rep


def check_tc_implications(model: RiskModel, battery, seed: int = 0,
                          tol: float = DEFAULT_TOL, min_weak: int = 100,
                          min_weak_star: int = 20) -> ConsistencyReport:
    """Evaluate the implication matrix between the time-consistency notions.

    (a) strong and monotone => weak and weak*; (b) constancy and weak* =>
    strong; (c) cash-subadditive, normalized and weak => the one-sided
    inequalities between rho_s(X) and rho_s(-rho_t(X)). An implication whose
    antecedent fails is reported as vacuous.
    """
    sp = model.space
    B = _battery(sp, battery)
    rng = np.random.default_rng(seed)
    ax = check_dynamic_axioms(model, B[: min(len(B), 50)], seed=seed)
    strong = check_strong_tc(model, B, tol=tol)
    try:
        weak = check_weak_tc(model, battery=B, seed=seed, min_nonvacuous=min_weak)
    except InsufficientNonVacuousPairs:
        weak = None
    try:
        weakstar = check_weak_star_tc(model, battery=B, seed=seed,
                                      min_nonvacuous=min_weak_star)
    except InsufficientNonVacuousPairs:
        weakstar = None
    const = [check_constancy(model, t, constancy_battery(sp, t, 20, rng), tol=tol)
             for t in sp.times]
    constancy_ok = all(c.passed for c in const)
    mono_ok = ax.item("monotonicity").passed
    csa_ok = ax.item("cash-subadditivity").passed and ax.item("normalization").passed
    weak_ok = weak is not None and weak.passed
    star_ok = weakstar is not None and weakstar.passed
    signs = check_sign_inequalities(model, B, tol=tol)

    rep = ConsistencyReport("implications", tol)
    ante_a = strong.passed and mono_ok
    rep.add("a: strong & monotone => weak & weak*",
            0.0 if (not ante_a or (weak_ok and star_ok)) else 1.0,
            {"strong": strong.passed, "monotone": mono_ok, "weak": weak_ok,
             "weakstar": star_ok}, vacuous=not ante_a)
    ante_b = constancy_ok and star_ok
    rep.add("b: constancy & weak* => strong",
            0.0 if (not ante_b or strong.passed) else strong.worst,
            {"constancy": constancy_ok, "weakstar": star_ok, "strong": strong.passed,
             "strong_worst": strong.worst}, vacuous=not ante_b)
    ante_c = csa_ok and weak_ok
    for it in signs.items:
        rep.add("c: " + it.scope, it.violation, it.witness,
                vacuous=(not ante_c) or it.vacuous)
    for name, ok, worst in (("strong", strong.passed, strong.worst),
                            ("weak", weak_ok, weak.worst if weak else np.inf),
                            ("weakstar", star_ok, weakstar.worst if weakstar else np.inf),
                            ("constancy", constancy_ok, max(c.worst for c in const)),
                            ("monotonicity", mono_ok, ax.item("monotonicity").violation)):
        rep.add(f"holds: {name}", worst if np.isfinite(worst) else 0.0,
                {"passed": ok}, informational=True)
    rep.info.update(signs.info)
    return rep
