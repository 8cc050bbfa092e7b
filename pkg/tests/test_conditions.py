import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risktree.conditions import (CONDITIONS, StructuredModel, ablate_penalty,
                                 bifurcate_discounts, bifurcate_measures, bifurcation_defect,
                                 build_cocycle_penalty, check_bifurcation_closure,
                                 check_cocycle, check_joint_pasting, check_locality,
                                 check_pasting_closure, check_positivity,
                                 check_product_family, joint_paste, joint_paste_defect,
                                 paste_measures, pasting_defect, random_structured_model,
                                 rectangular_model, structure_model, verify_theorem_tc)
from risktree.dynamic import DualModel, product_form_discount
from risktree.errors import FactorOutOfRange, PreconditionNotMet
from risktree.fixtures import (binary2, broken_cocycle, coherent_grid, conditional_expectation,
                               discounted_cocycle)
from risktree.timecons import random_battery
from strategies import measures, spaces


def subset(model, keep):
    return DualModel(model.space, model.D[keep], model.Q[keep], model.c[keep],
                     normalize="off", names=[model.names[i] for i in keep])


def test_paste_by_hand():
    sp = binary2()
    Q1 = np.array([0.1, 0.2, 0.3, 0.4])
    out = paste_measures(sp, Q1, sp.P, 0, 1)
    np.testing.assert_allclose(out, [0.15, 0.15, 0.35, 0.35])
    assert pasting_defect(sp, out, Q1, sp.P, 0, 1) <= 1e-15


@settings(max_examples=50, deadline=None)
@given(data=st.data())
def test_pasting_identity(data):
    sp = data.draw(spaces())
    Q1 = data.draw(measures(sp, positive=False))
    Q2 = data.draw(measures(sp, positive=False))
    s = data.draw(st.integers(0, sp.T))
    t = data.draw(st.integers(s, sp.T))
    Qs = paste_measures(sp, Q1, Q2, s, t)
    assert Qs.sum() == pytest.approx(1.0)
    assert pasting_defect(sp, Qs, Q1, Q2, s, t) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(data=st.data())
def test_bifurcation_identity(data):
    sp = data.draw(spaces())
    Q1 = data.draw(measures(sp))
    Q2 = data.draw(measures(sp))
    s = data.draw(st.integers(0, sp.T))
    atoms = data.draw(st.lists(st.integers(0, sp.n_atoms(s) - 1), unique=True))
    A = sp.event(s, atoms)
    Qs = bifurcate_measures(sp, Q1, Q2, A, s)
    assert bifurcation_defect(sp, Qs, Q1, Q2, A, s) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(data=st.data())
def test_joint_paste_identity(data):
    sp = data.draw(spaces(max_leaves=9))
    Q1 = data.draw(measures(sp))
    Q2 = data.draw(measures(sp))
    s = data.draw(st.integers(0, sp.T))
    t = data.draw(st.integers(s, sp.T))
    u = data.draw(st.integers(t, sp.T))
    rng = np.random.default_rng(data.draw(st.integers(0, 999)))
    D1 = sp.expand(rng.uniform(0, 1, sp.n_atoms(s)), s)
    D2 = sp.expand(rng.uniform(0, 1, sp.n_atoms(t)), t)
    Ds, Qs = joint_paste(sp, D1, Q1, D2, Q2, s, t, u)
    assert sp.is_measurable(Ds, s)
    assert joint_paste_defect(sp, Ds, Qs, D1, Q1, D2, Q2, s, t, u) <= 1e-12


def test_bifurcate_discounts():
    sp = binary2()
    A = sp.event(1, [0])
    out = bifurcate_discounts(sp, np.full(4, 0.5), np.array([0.2, 0.2, 0.9, 0.9]), A, 1)
    np.testing.assert_allclose(out, [0.5, 0.5, 0.9, 0.9])
    with pytest.raises(FactorOutOfRange):
        bifurcate_discounts(sp, np.full(4, 1.5), np.ones(4), A, 1)


def test_cocycle_penalty_by_hand():
    sp = binary2()
    Q = np.array([[0.1, 0.2, 0.3, 0.4]])
    D = product_form_discount(sp, np.full((2, 4), 0.5))[None]
    pi = np.zeros((1, 2, 4))
    pi[0, 0] = 0.2
    pi[0, 1] = [0.1, 0.1, 0.3, 0.3]
    c = build_cocycle_penalty(sp, pi, D, Q)
    # c_{0,2} = 0.2 + 0.5 * (0.3 * 0.1 + 0.7 * 0.3)
    assert c[0, 0, 2, 0] == pytest.approx(0.2 + 0.5 * (0.03 + 0.21))
    np.testing.assert_allclose(c[0, 1, 2], [0.1, 0.1, 0.3, 0.3])
    np.testing.assert_allclose(c[0, 2, 2], 0.0)
    model = DualModel(sp, D, Q, c, normalize="off")
    assert check_cocycle(model).passed


def test_cocycle_zero_times_infinity():
    sp = binary2()
    Q = sp.P[None]
    D = np.ones((1, 3, 3, 4))
    D[0, 0, 1:] = 0.0
    pi = np.zeros((1, 2, 4))
    pi[0, 1] = np.inf
    c = build_cocycle_penalty(sp, pi, D, Q)
    assert c[0, 0, 2, 0] == 0.0        # the infinite later term is discounted away
    assert np.all(np.isinf(c[0, 1, 2]))


def test_broken_fixture_fails_only_the_cocycle():
    m = broken_cocycle()
    rep = check_cocycle(m)
    assert not rep.passed
    assert rep.worst == pytest.approx(0.05, abs=1e-12)
    assert check_locality(m).passed


@pytest.mark.parametrize("builder", [conditional_expectation, coherent_grid,
                                     discounted_cocycle])
def test_fixture_conditions_hold(builder):
    sm = structure_model(builder())
    reps = sm.conditions()
    assert set(reps) == set(CONDITIONS)
    assert all(r.passed for r in reps.values()), {k: r.summary() for k, r in reps.items()}
    assert check_product_family(sm.model).passed


def test_nonrectangular_family_fails_pasting():
    sp = binary2()
    Q = np.vstack([sp.P, [0.1, 0.2, 0.3, 0.4]])
    m = DualModel(sp, np.ones((2, 3, 3, 4)), Q, np.zeros((2, 3, 3, 4)))
    assert not check_pasting_closure(m).passed
    assert not check_bifurcation_closure(m).passed
    assert not check_joint_pasting(m).passed
    with pytest.raises(PreconditionNotMet) as err:
        verify_theorem_tc(structure_model(m), random_battery(sp, 10, np.random.default_rng(0)))
    assert "Qb" in str(err.value)


def test_dropping_a_pair_breaks_closure():
    m = coherent_grid()
    keep = list(range(1, m.n_pairs))
    small = subset(m, keep)
    assert not (check_pasting_closure(small).passed and check_joint_pasting(small).passed)


def test_locality_detects_tampered_penalty():
    m = discounted_cocycle()
    # pairs that differ only below the second node share data on the first one
    c = m.c.copy()
    c[0, 1, 2, :2] += 0.3
    rep = check_locality(m.with_penalty(c))
    assert not rep.passed
    assert rep.item("(1,2)").violation == pytest.approx(0.3)
    assert rep.item("(0,1)").passed


def test_positivity():
    sp = binary2()
    m = DualModel(sp, np.ones((1, 3, 3, 4)), [[0.5, 0.5, 0, 0]], np.zeros((1, 3, 3, 4)))
    assert not check_positivity(m).passed
    assert check_positivity(conditional_expectation()).passed


def test_rectangular_model_sizes():
    sp = binary2()
    opts = [((0.5, 0.5), 0.0), ((0.25, 0.75), 0.1)]
    sm = rectangular_model(sp, [[opts], [opts, opts]], root_discounts=(1.0, 0.5),
                           root_penalties=(0.0, 0.2), later_factors=[0.5])
    assert isinstance(sm, StructuredModel)
    assert sm.model.n_pairs == 2 * 2 ** 3
    B = random_battery(sp, 50, np.random.default_rng(0))
    assert verify_theorem_tc(sm, B).passed


@pytest.mark.parametrize("seed", range(4))
def test_random_structured_models_pass(seed):
    rng = np.random.default_rng(seed)
    sm = random_structured_model(rng, max_pairs=64, max_leaves=12)
    B = random_battery(sm.space, 40, rng)
    rep = verify_theorem_tc(sm, B)
    assert rep.passed and rep.item("recursivity").violation <= 1e-9


@pytest.mark.parametrize("delta", [0.01, 0.05, 0.1])
def test_ablation_breaks_exactly_delta(delta):
    rng = np.random.default_rng(int(delta * 100))
    sm = random_structured_model(rng, max_pairs=64, max_leaves=12)
    ab = ablate_penalty(sm.model, delta, rng)
    assert check_cocycle(ab.model).worst == pytest.approx(delta, abs=1e-12)
    X0 = ab.X0
    before = sm.model.rho(X0, ab.s, ab.u)
    after = ab.model.rho(X0, ab.s, ab.u)
    atom = ab.model.space.labels[ab.s] == ab.atom
    np.testing.assert_allclose((after - before)[atom], delta, atol=1e-12)
    with pytest.raises(PreconditionNotMet):
        verify_theorem_tc(structure_model(ab.model), random_battery(sm.space, 5, rng))
