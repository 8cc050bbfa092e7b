import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risktree.errors import (EmptyTree, InvalidTreeSpec, NonPositiveWeight, NotMeasurable,
                             NotMeasurableEvent, SpaceMismatch, WeightsDoNotSumToOne)
from risktree.tree import (SubProbability, TreeSpec, build_tree, density_process,
                           is_equivalent, nodewise_max, reduces_to_P_at)
from strategies import atom_lists, brute_cond_exp, measures, spaces, vectors


def test_binary_tree_layout():
    sp = build_tree(TreeSpec.uniform([2, 2]))
    assert sp.T == 2 and sp.n_leaves == 4
    assert [sp.n_atoms(t) for t in sp.times] == [1, 2, 4]
    np.testing.assert_array_equal(sp.labels[1], [0, 0, 1, 1])
    np.testing.assert_allclose(sp.P, 0.25)
    np.testing.assert_allclose(sp.atom_mass(1), [0.5, 0.5])
    np.testing.assert_array_equal(sp.ancestor(2, 1), [0, 0, 1, 1])
    np.testing.assert_array_equal(sp.children(1, 1), [2, 3])


def test_irregular_branching():
    # root has 3 children with 1, 2 and 3 children respectively
    sp = build_tree(horizon=2, branching=[3, 1, 2, 3], weights=[1 / 6] * 6)
    assert sp.n_leaves == 6
    np.testing.assert_array_equal(sp.labels[1], [0, 1, 1, 2, 2, 2])


@pytest.mark.parametrize("kwargs, exc", [
    (dict(horizon=1, branching=[2], weights=[0.5, -0.5]), NonPositiveWeight),
    (dict(horizon=1, branching=[2], weights=[0.5, 0.6]), WeightsDoNotSumToOne),
    (dict(horizon=1, branching=[], weights=[1.0]), EmptyTree),
    (dict(horizon=1, branching=[2, 2], weights=[0.5, 0.5]), InvalidTreeSpec),
    (dict(horizon=1, branching=[2], weights=[1.0]), InvalidTreeSpec),
    (dict(horizon=1, branching=[0], weights=[]), InvalidTreeSpec),
])
def test_invalid_specs(kwargs, exc):
    with pytest.raises(exc):
        build_tree(**kwargs)


def test_horizon_zero():
    sp = build_tree(horizon=0, branching=[], weights=[1.0])
    assert sp.n_leaves == 1 and sp.n_atoms(0) == 1


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_atoms_match_parent_links(data):
    sp = data.draw(spaces())
    for t in sp.times:
        lists = atom_lists(sp, t)
        assert [list(a) for a in sp.atoms[t]] == lists


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_cond_exp_against_loop(data):
    sp = data.draw(spaces())
    X = data.draw(vectors(sp))
    Q = data.draw(measures(sp, positive=False))
    t = data.draw(st.integers(0, sp.T))
    np.testing.assert_allclose(sp.cond_exp(X, Q, t), brute_cond_exp(sp, X, Q, t),
                               atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_tower_property(data):
    sp = data.draw(spaces())
    X = data.draw(vectors(sp))
    Q = data.draw(measures(sp))
    s = data.draw(st.integers(0, sp.T))
    t = data.draw(st.integers(s, sp.T))
    lhs = sp.cond_exp(sp.cond_exp(X, Q, t), Q, s)
    np.testing.assert_allclose(lhs, sp.cond_exp(X, Q, s), atol=1e-12)
    assert sp.is_measurable(sp.cond_exp(X, Q, t), t)


def test_batched_cond_exp():
    sp = build_tree(TreeSpec.uniform([2, 3]))
    rng = np.random.default_rng(0)
    B = rng.normal(size=(5, sp.n_leaves))
    out = sp.cond_exp(B, sp.P, 1)
    for k in range(5):
        np.testing.assert_allclose(out[k], sp.cond_exp(B[k], sp.P, 1))


def test_measurability_and_events():
    sp = build_tree(TreeSpec.uniform([2, 2]))
    x = np.array([1.0, 1.0, 3.0, 3.0])
    assert sp.is_measurable(x, 1) and not sp.is_measurable(x, 0)
    assert sp.measurability_level(x) == 1
    with pytest.raises(NotMeasurable):
        sp.require_measurable(np.arange(4.0), 1)
    A = sp.event(1, [1])
    np.testing.assert_array_equal(A, [False, False, True, True])
    with pytest.raises(NotMeasurableEvent):
        sp.require_event(np.array([True, False, False, False]), 1)
    with pytest.raises(SpaceMismatch):
        sp.check_vector(np.ones(3))


def test_density_and_nodewise_max():
    sp = build_tree(TreeSpec.uniform([2, 2]))
    Q = np.array([0.1, 0.2, 0.3, 0.4])
    Z1 = density_process(sp, Q, 1)
    np.testing.assert_allclose(Z1, [0.6, 0.6, 1.4, 1.4])
    assert is_equivalent(sp, Q) and not is_equivalent(sp, [0.5, 0.5, 0, 0])
    assert reduces_to_P_at(sp, [0.1, 0.4, 0.25, 0.25], 1)
    fam = np.array([[1.0, 1, 0, 0], [0, 0, 2, 2]])
    np.testing.assert_allclose(nodewise_max(sp, fam, 1), [1, 1, 2, 2])


def test_subprobability_weights():
    mu = SubProbability(0.5, np.array([0.25, 0.75]))
    np.testing.assert_allclose(mu.weights(), [0.125, 0.375])
