import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from risktree.errors import GridTooLarge, MassExceedsOne, PenaltyNotNormalized, SpaceMismatch
from risktree.static import (DualDictionary, StaticRiskMeasure, check_static_axioms,
                             conjugate_grid_oracle, decompose_subprobability,
                             eval_static_rho, minimal_penalty_static, oracle_diverges,
                             rebuild_from_minimal_penalty)
from risktree.tree import SubProbability, TreeSpec, build_tree


def binary():
    return build_tree(TreeSpec.uniform([2, 2]))


def two_pair():
    sp = binary()
    return StaticRiskMeasure(sp, DualDictionary.from_entries(
        [(1.0, sp.P, 0.0), (0.5, [0.5, 0.0, 0.25, 0.25], 0.1)]))


def random_measure(rng, n_entries=4, leaves=(2, 2)):
    sp = build_tree(TreeSpec.uniform(list(leaves)))
    L = sp.n_leaves
    a = np.r_[1.0, rng.uniform(0.2, 1, n_entries - 1)]
    Q = np.vstack([sp.P, rng.dirichlet(np.ones(L), n_entries - 1)])
    c = np.r_[0.0, rng.uniform(0, 1, n_entries - 1)]
    return StaticRiskMeasure(sp, DualDictionary(a, Q, c))


def primal_conjugate(rm, mu):
    """sup_X {E_mu[-X] - rho(X)} as an LP over (X, s) solved by scipy."""
    pts, costs = rm.vertices()
    L = rm.space.n_leaves
    # maximise -mu.X - s  <=>  minimise mu.X + s ; s >= -p_i.X - c_i
    c = np.append(mu, 1.0)
    A = np.hstack([-pts, -np.ones((len(costs), 1))])
    res = linprog(c, A_ub=A, b_ub=costs, bounds=[(None, None)] * (L + 1), method="highs")
    if res.status == 3:
        return np.inf
    return -res.fun


def test_two_pair_values():
    rm = two_pair()
    X = np.array([4.0, 0.0, 2.0, 2.0])
    # E_P[-X] = -2 ; 0.5 * (-(2 + 0.5 + 0.5)) - 0.1 = -1.6
    assert eval_static_rho(rm, X) == pytest.approx(-1.6, abs=1e-15)
    assert rm(np.zeros(4)) == 0.0
    np.testing.assert_allclose(rm(np.vstack([X, -X])), [-1.6, 2.0])


def test_normalization_modes():
    sp = binary()
    d = DualDictionary(np.array([1.0]), sp.P[None, :], np.array([0.3]))
    with pytest.raises(PenaltyNotNormalized):
        StaticRiskMeasure(sp, d)
    assert StaticRiskMeasure(sp, d, normalize="shift")(np.zeros(4)) == 0.0
    assert StaticRiskMeasure(sp, d, normalize="off")(np.zeros(4)) == pytest.approx(-0.3)
    with pytest.raises(SpaceMismatch):
        StaticRiskMeasure(sp, DualDictionary(np.ones(1), np.ones((1, 3)) / 3, np.zeros(1)))


def test_infinite_penalty_entries_ignored():
    sp = binary()
    d = DualDictionary(np.ones(2), np.vstack([sp.P, [1, 0, 0, 0]]), np.array([0.0, np.inf]))
    rm = StaticRiskMeasure(sp, d)
    assert rm(np.array([-10.0, 0, 0, 0])) == pytest.approx(2.5)
    assert len(rebuild_from_minimal_penalty(rm).dictionary) == 1


def test_decompose_subprobability():
    sp = binary()
    mu = decompose_subprobability(sp, [0.1, 0.1, 0.2, 0.2])
    assert mu.a == pytest.approx(0.6)
    np.testing.assert_allclose(mu.Q, np.array([1, 1, 2, 2]) / 6)
    zero = decompose_subprobability(sp, np.zeros(4))
    assert zero.a == 0 and not zero.unique
    with pytest.raises(MassExceedsOne):
        decompose_subprobability(sp, [0.5, 0.5, 0.5, 0.0])


def test_minimal_penalty_on_two_pair():
    rm = two_pair()
    assert minimal_penalty_static(rm, rm.dictionary.measures[0]) == pytest.approx(0.0)
    assert minimal_penalty_static(rm, rm.dictionary.measures[1]) == pytest.approx(0.1)
    mid = rm.dictionary.measures.mean(axis=0)
    assert minimal_penalty_static(rm, mid) == pytest.approx(0.05)
    assert np.isinf(minimal_penalty_static(rm, [0.5, 0.1, 0.1, 0.1]))
    assert np.isinf(minimal_penalty_static(rm, [0.5, 0.5, 0.5, 0.0]))
    assert minimal_penalty_static(rm, SubProbability(1.0, rm.space.P)) == pytest.approx(0.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_minimal_penalty_matches_primal_lp(seed):
    rng = np.random.default_rng(seed)
    rm = random_measure(rng)
    verts = rm.dictionary.measures
    inside = rng.dirichlet(np.ones(len(verts))) @ verts
    outside = rng.dirichlet(np.ones(4) * 0.3) * rng.uniform(0.3, 1)
    for mu in (inside, outside):
        ours, ref = minimal_penalty_static(rm, mu), primal_conjugate(rm, mu)
        if np.isinf(ref):
            assert np.isinf(ours)
        else:
            assert ours == pytest.approx(ref, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_rebuild_reproduces_rho(seed):
    rng = np.random.default_rng(seed)
    rm = random_measure(rng, n_entries=5)
    d = rm.dictionary
    c = d.c + np.r_[0, rng.uniform(0, 3, 4)]
    loose = StaticRiskMeasure(rm.space, DualDictionary(d.a, d.Q, c))
    B = rng.normal(size=(50, 4)) * 4
    np.testing.assert_allclose(rebuild_from_minimal_penalty(loose)(B), loose(B), atol=1e-9)


def test_penalty_lower_bounds_from_duality():
    # Fenchel-Young: rho(X) >= E_mu[-X] - cbar(mu) for every X
    rng = np.random.default_rng(3)
    rm = random_measure(rng, n_entries=5)
    verts = rm.dictionary.measures
    for _ in range(20):
        mu = rng.dirichlet(np.ones(len(verts))) @ verts
        cbar = minimal_penalty_static(rm, mu)
        X = rng.normal(size=(100, 4)) * 5
        assert np.all(rm(X) >= -(X @ mu) - cbar - 1e-12)


def test_grid_oracle():
    rm = two_pair()
    mid = rm.dictionary.measures.mean(axis=0)
    assert conjugate_grid_oracle(rm, mid, 10.0, 21) == pytest.approx(0.05, abs=2.0)
    assert conjugate_grid_oracle(rm, mid, 10.0, 21) <= 0.05 + 1e-12
    div, vals = oracle_diverges(rm, [0.5, 0.1, 0.1, 0.1], 21)
    assert div and vals[0] < vals[1] < vals[2]
    assert not oracle_diverges(rm, mid, 21)[0]
    with pytest.raises(GridTooLarge):
        conjugate_grid_oracle(rm, mid, 1.0, 10**6)
    with pytest.raises(ValueError):
        conjugate_grid_oracle(rm, mid, -1.0, 5)


def test_grid_oracle_search_path_on_larger_tree():
    rng = np.random.default_rng(8)
    rm = random_measure(rng, n_entries=4, leaves=(2, 2, 2))
    mu = rm.dictionary.measures[1:].mean(axis=0)
    lp = minimal_penalty_static(rm, mu)
    oracle = conjugate_grid_oracle(rm, mu, 10.0, 21, exhaustive_budget=10)
    assert oracle <= lp + 1e-9
    assert abs(oracle - lp) <= 2.0


def test_static_axioms_on_two_pair():
    rm = two_pair()
    B = np.random.default_rng(0).normal(size=(200, 4)) * 3
    rep = check_static_axioms(rm, rm.space, B)
    assert rep.passed
    for key in ("convexity", "monotonicity", "cash-subadditivity", "normalization",
                "constant-bounds"):
        assert rep.item(key).violation <= 1e-12
    assert rep.item("cash-additivity").informational
    assert rep.item("cash-additivity").violation > 0.1


def test_static_axioms_catch_a_nonconvex_functional():
    sp = binary()
    B = np.random.default_rng(0).normal(size=(50, 4))
    rep = check_static_axioms(lambda X: np.min(-X, axis=-1), sp, B)
    assert not rep.item("convexity").passed
