import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risktree.conditions import random_structured_model
from risktree.dynamic import (AggregatedRisk, DualModel, aggregate_rho0t, check_dynamic_axioms,
                              check_regularity, discount_decomposition, eval_dynamic_rho,
                              induced_subprobability, lift_static, minimal_penalty_dynamic,
                              minimal_penalty_table, penalty_aggregation_check,
                              product_form_discount)
from risktree.errors import (FactorOutOfRange, MassExceedsOne, NotMeasurable,
                             PenaltyNotNormalized, SpaceMismatch)
from risktree.fixtures import binary2, discounted_cocycle, two_pair_static
from risktree.putpremium import PutPremiumModel
from strategies import atom_lists, brute_cond_exp, spaces, vectors


def brute_rho(model, X, t, u):
    """max_i D_i E_{Q_i}[-X|F_t] - c_i, atom by atom with explicit loops."""
    sp = model.space
    out = np.empty(sp.n_leaves)
    for leaves in atom_lists(sp, t):
        best = -np.inf
        for i in range(model.n_pairs):
            ce = brute_cond_exp(sp, -X, model.Q[i], t)[leaves[0]]
            d, c = model.D[i, t, u, leaves[0]], model.c[i, t, u, leaves[0]]
            if np.isfinite(c):
                best = max(best, d * ce - c)
        out[leaves] = best
    return out


def random_dual(rng, sp, n=3):
    """Unstructured dual family with F_t-measurable random D and c."""
    T1, L = sp.T + 1, sp.n_leaves
    D = np.ones((n, T1, T1, L))
    c = np.zeros((n, T1, T1, L))
    for i in range(1, n):
        for t in range(T1):
            for u in range(t, T1):
                D[i, t, u] = sp.expand(rng.uniform(0.2, 1, sp.n_atoms(t)), t)
                c[i, t, u] = sp.expand(rng.uniform(0, 0.5, sp.n_atoms(t)), t)
    Q = np.vstack([sp.P, rng.dirichlet(np.ones(L), n - 1)])
    return DualModel(sp, D, Q, c)


def test_conditional_expectation_model():
    m = DualModel.conditional_expectation(binary2())
    X = np.array([4.0, 0.0, 2.0, 2.0])
    np.testing.assert_allclose(m.rho(X, 1), [-2, -2, -2, -2])
    np.testing.assert_allclose(m.rho(X, 2), -X)
    assert eval_dynamic_rho(m, X, 0) == pytest.approx(-2.0)


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_rho_against_loops(data):
    sp = data.draw(spaces(max_leaves=9))
    seed = data.draw(st.integers(0, 1000))
    model = random_dual(np.random.default_rng(seed), sp)
    X = data.draw(vectors(sp))
    t = data.draw(st.integers(0, sp.T))
    np.testing.assert_allclose(model.rho(X, t, sp.T), brute_rho(model, X, t, sp.T),
                               atol=1e-12)


def test_batch_and_cache_agree():
    sp = binary2()
    m = random_dual(np.random.default_rng(1), sp)
    B = np.random.default_rng(2).normal(size=(6, 4))
    batch = m.rho(B, 1)
    for k in range(6):
        np.testing.assert_array_equal(m.rho(B[k], 1), batch[k])
        np.testing.assert_array_equal(m.rho(B[k], 1), batch[k])  # cached
    m.clear_cache()


def test_measurability_of_arguments():
    m = DualModel.conditional_expectation(binary2())
    with pytest.raises(NotMeasurable):
        m.rho(np.arange(4.0), 0, 1)
    np.testing.assert_allclose(m.rho(np.array([1.0, 1, 3, 3]), 0, 1), -2.0)
    np.testing.assert_allclose(m.project(np.arange(4.0), 1), [0.5, 0.5, 2.5, 2.5])
    with pytest.raises(SpaceMismatch):
        m.rho(np.ones(3), 0)


def test_construction_errors():
    sp = binary2()
    T1, L = sp.T + 1, 4
    D = np.ones((1, T1, T1, L))
    c = np.zeros((1, T1, T1, L))
    bad = D.copy()
    bad[0, 0, 1] = 1.5
    with pytest.raises(FactorOutOfRange):
        DualModel(sp, bad, sp.P[None], c)
    bad = D.copy()
    bad[0, 1, 2] = [0.1, 0.2, 0.3, 0.4]
    with pytest.raises(NotMeasurable):
        DualModel(sp, bad, sp.P[None], c)
    with pytest.raises(PenaltyNotNormalized):
        DualModel(sp, D, sp.P[None], c + 0.1)
    assert DualModel(sp, D, sp.P[None], c + 0.1, normalize="off").normalization_gap() == \
        pytest.approx(0.1)
    with pytest.raises(SpaceMismatch):
        DualModel(sp, D[:, :2], sp.P[None], c)


def test_product_form_discount():
    sp = binary2()
    f = np.vstack([np.full(4, 0.5), np.full(4, 0.8)])
    D = product_form_discount(sp, f)
    assert D[0, 2, 0] == pytest.approx(0.4)
    assert D[1, 2, 0] == pytest.approx(0.8)
    np.testing.assert_allclose(D[2, 2], 1.0)
    with pytest.raises(FactorOutOfRange):
        product_form_discount(sp, f * 3)
    with pytest.raises(NotMeasurable):
        product_form_discount(sp, np.vstack([[0.1, 0.2, 0.3, 0.4], np.ones(4)]))


def test_minimal_penalty_dynamic_simple_cases():
    sp = binary2()
    ce = DualModel.conditional_expectation(sp)
    np.testing.assert_allclose(minimal_penalty_dynamic(ce, 0, 0), 0.0)
    # zero discount: the only feasible representation is unreachable
    assert np.all(np.isinf(minimal_penalty_dynamic(ce, (np.zeros(4), sp.P), 1)))
    put = PutPremiumModel(sp, 2.0).to_dual()
    np.testing.assert_allclose(minimal_penalty_dynamic(put, (np.zeros(4), sp.P), 1), 0.0)
    with pytest.raises(NotMeasurable):
        minimal_penalty_dynamic(ce, (np.array([0.1, 0.2, 0.3, 0.4]), sp.P), 1)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_minimal_penalty_is_below_given_and_reproduces_rho(seed):
    rng = np.random.default_rng(seed)
    sp = binary2()
    m = random_dual(rng, sp, n=4)
    table = minimal_penalty_table(m)
    T1 = sp.T + 1
    for t in range(T1):
        for u in range(t, T1):
            assert np.all(table[:, t, u] <= m.c[:, t, u] + 1e-12)
    rebuilt = m.with_penalty(table)
    B = rng.normal(size=(30, 4)) * 3
    for t in range(T1):
        np.testing.assert_allclose(rebuilt.rho(B, t), m.rho(B, t), atol=1e-9)


def test_axioms_and_regularity_on_discounted_fixture():
    m = discounted_cocycle()
    rng = np.random.default_rng(0)
    B = rng.normal(size=(60, 4)) * 2
    rep = check_dynamic_axioms(m, B)
    assert rep.passed
    assert rep.item("shift-identity").violation <= 1e-12
    assert rep.item("cash-additivity").violation > 1e-3
    recs = [(B[k], B[k - 1], m.space.event(1, [k % 2]), 1) for k in range(20)]
    assert check_regularity(m, recs).passed


def test_axiom_checker_flags_a_broken_model():
    class Concave(PutPremiumModel):
        def _nodes(self, X, t, u):
            return -super()._nodes(X, t, u)
    bad = Concave(binary2(), 2.0)
    rep = check_dynamic_axioms(bad, np.random.default_rng(0).normal(size=(40, 4)))
    assert not rep.passed


def test_discount_decomposition():
    sp = binary2()
    mu = np.array([0.1, 0.1, 0.0, 0.0])
    dec = discount_decomposition(sp, mu, 1)
    np.testing.assert_allclose(dec.D, [0.4, 0.4, 0, 0])
    np.testing.assert_allclose(dec.D * dec.Q_tilde, mu)
    np.testing.assert_allclose(sp.atom_sum(dec.Q_tilde, 1), sp.atom_mass(1))
    np.testing.assert_array_equal(dec.null, [False, False, True, True])
    with pytest.raises(FactorOutOfRange):
        discount_decomposition(sp, [0.5, 0.5, 0.0, 0.0], 1, certified=True)
    with pytest.raises(MassExceedsOne):
        discount_decomposition(sp, [0.5, 0.5, 0.5, 0.0], 1)


def test_aggregated_risk_and_penalty():
    sp = binary2()
    put = PutPremiumModel(sp, 2.0).to_dual()
    agg = aggregate_rho0t(put, 1)
    assert isinstance(agg, AggregatedRisk)
    X = -np.ones(4)
    assert agg(X) == pytest.approx(0.5)
    # mu = 1/2 P lies in the aggregated domain with zero cost
    assert agg.minimal_penalty(sp.P * 0.5) == pytest.approx(0.0)
    assert np.isinf(agg.minimal_penalty(sp.P * 0.75))
    with pytest.raises(TypeError):
        AggregatedRisk(PutPremiumModel(sp, 2.0), 1).minimal_penalty(sp.P)


@pytest.mark.parametrize("seed", range(3))
def test_penalty_aggregation_identity(seed):
    sm = random_structured_model(np.random.default_rng(seed), max_pairs=16, max_leaves=8)
    m = sm.model
    for i in range(m.n_pairs):
        for t in m.space.times:
            v = penalty_aggregation_check(m, i, t)
            assert v.passed, (i, t, v)
            mu = induced_subprobability(m, i, t)
            assert mu.sum() <= 1 + 1e-12


def test_lift_static_matches_static_at_root():
    rm = two_pair_static()
    lifted = lift_static(rm)
    B = np.random.default_rng(0).normal(size=(20, 4))
    np.testing.assert_allclose(lifted.rho(B, 0), np.repeat(rm(B)[:, None], 4, axis=1))
