"""Finite filtered probability spaces on scenario trees.

Leaves are numbered depth-first with children visited in ascending order, so
every atom of every partition is a contiguous range of leaf indices. Random
variables are plain float arrays indexed by leaf (a leading batch axis is
allowed everywhere); measures are nonnegative leaf-weight arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (EmptyFamily, EmptyTree, InvalidTreeSpec, NonPositiveWeight,
                     NotMeasurable, NotMeasurableEvent, SpaceMismatch,
                     WeightsDoNotSumToOne)

CONSTRUCTION_TOL = 1e-12
DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class TreeSpec:
    """Declarative tree description.

    ``branching`` lists the number of children of every non-leaf node in
    depth-first order; ``weights`` are the reference probabilities of the
    leaves in the same order.
    """
    horizon: int
    branching: tuple
    weights: tuple

    @classmethod
    def uniform(cls, branching_per_level: Sequence[int]) -> "TreeSpec":
        """Tree with ``branching_per_level[t]`` children at every node of depth t."""
        horizon = len(branching_per_level)
        counts: list[int] = []

        def walk(depth):
            if depth == horizon:
                return 1
            k = branching_per_level[depth]
            counts.append(k)
            return sum(walk(depth + 1) for _ in range(k))

        n = walk(0)
        return cls(horizon, tuple(counts), tuple([1.0 / n] * n))


class FilteredSpace:
    """Scenario tree with per-time partitions and reference weights ``P``."""

    def __init__(self, horizon: int, starts: list[np.ndarray],
                 parents: list[np.ndarray], P: np.ndarray, branching=()):
        self.T = int(horizon)
        self.P = np.asarray(P, dtype=float)
        self.P.setflags(write=False)
        self.n_leaves = self.P.size
        self.starts = [np.asarray(s, dtype=np.intp) for s in starts]
        self.parents = [np.asarray(p, dtype=np.intp) for p in parents]
        self.branching = tuple(int(b) for b in branching)
        self.labels = []
        self.atoms = []
        for s in self.starts:
            stops = np.append(s[1:], self.n_leaves)
            lab = np.repeat(np.arange(s.size), stops - s)
            lab.setflags(write=False)
            self.labels.append(lab)
            self.atoms.append([np.arange(a, b) for a, b in zip(s, stops)])
        self._P_atom = [np.add.reduceat(self.P, s) for s in self.starts]

    @property
    def times(self):
        return range(self.T + 1)

    def n_atoms(self, t: int) -> int:
        return self.starts[t].size

    def __eq__(self, other):
        if not isinstance(other, FilteredSpace):
            return NotImplemented
        return (self.T == other.T and self.branching == other.branching
                and np.array_equal(self.P, other.P))

    def __hash__(self):
        return hash((self.T, self.branching, self.P.tobytes()))

    def __repr__(self):
        return f"FilteredSpace(T={self.T}, leaves={self.n_leaves})"

    def spec(self) -> TreeSpec:
        return TreeSpec(self.T, self.branching, tuple(float(p) for p in self.P))

    # -- atom bookkeeping -------------------------------------------------
    def ancestor(self, t_from: int, t_to: int) -> np.ndarray:
        """Index of the ancestor at time ``t_to`` of every atom at ``t_from``."""
        if t_to > t_from:
            raise ValueError("ancestor time must not exceed the starting time")
        idx = np.arange(self.n_atoms(t_from))
        for r in range(t_from, t_to, -1):
            idx = self.parents[r - 1][idx]
        return idx

    def children(self, t: int, atom: int) -> np.ndarray:
        return np.flatnonzero(self.parents[t] == atom)

    def atom_sum(self, x, t: int) -> np.ndarray:
        """Sum of ``x`` over each atom of time ``t`` along the last axis."""
        x = np.asarray(x, dtype=float)
        return np.add.reduceat(x, self.starts[t], axis=-1)

    def expand(self, node_values, t: int) -> np.ndarray:
        """Leaf vector from one value per atom of time ``t``."""
        node_values = np.asarray(node_values, dtype=float)
        return node_values[..., self.labels[t]]

    def node_values(self, x, t: int) -> np.ndarray:
        """One value per atom of time ``t`` (``x`` assumed measurable there)."""
        return np.asarray(x, dtype=float)[..., self.starts[t]]

    def atom_mass(self, t: int) -> np.ndarray:
        return self._P_atom[t]

    def check_vector(self, x, name="vector") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.n_leaves,):
            raise SpaceMismatch(f"{name} has {x.shape[-1] if x.ndim else 0} "
                                f"entries, tree has {self.n_leaves} leaves")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{name} has non-finite entries")
        return x

    def is_measurable(self, x, t: int, tol: float = CONSTRUCTION_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        fin = np.where(np.isfinite(x), x, 0.0)
        inf_pattern = np.where(np.isfinite(x), 0.0, np.sign(x))
        ok = np.all(np.abs(fin - self.expand(self.node_values(fin, t), t)) <= tol)
        same_inf = np.array_equal(inf_pattern,
                                  self.expand(self.node_values(inf_pattern, t), t))
        return bool(ok and same_inf)

    def require_measurable(self, x, t: int, name="vector", tol=CONSTRUCTION_TOL):
        if not self.is_measurable(x, t, tol):
            raise NotMeasurable(f"{name} is not F_{t}-measurable")

    def measurability_level(self, x, tol: float = CONSTRUCTION_TOL) -> int:
        """Smallest t such that ``x`` is constant on the atoms of time t."""
        for t in self.times:
            if self.is_measurable(x, t, tol):
                return t
        return self.T

    def event(self, t: int, atom_ids) -> np.ndarray:
        """Boolean leaf mask of the union of the given atoms of time ``t``."""
        mask = np.zeros(self.n_atoms(t), dtype=bool)
        mask[list(atom_ids)] = True
        return mask[self.labels[t]]

    def require_event(self, A, t: int) -> np.ndarray:
        A = np.asarray(A, dtype=bool)
        if A.shape != (self.n_leaves,):
            raise SpaceMismatch("event mask has the wrong length")
        if not self.is_measurable(A.astype(float), t):
            raise NotMeasurableEvent(f"event is not in F_{t}")
        return A

    # -- probability ------------------------------------------------------
    def cond_exp(self, X, Q, t: int) -> np.ndarray:
        """E_Q[X | F_t] as a leaf vector; Q-null atoms fall back to P."""
        X = np.asarray(X, dtype=float)
        Q = np.asarray(Q, dtype=float)
        num = self.atom_sum(Q * X, t)
        den = self.atom_sum(Q, t)
        p_cond = self.atom_sum(self.P * X, t) / self._P_atom[t]
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(den > 0, num / np.where(den > 0, den, 1.0), p_cond)
        return self.expand(vals, t)

    def expectation(self, X, Q=None) -> np.ndarray:
        Q = self.P if Q is None else np.asarray(Q, dtype=float)
        return np.sum(np.asarray(X, dtype=float) * Q, axis=-1)


def build_tree(spec: TreeSpec | None = None, *, horizon=None, branching=None,
               weights=None, weight_tol: float = 1e-9) -> FilteredSpace:
    """Construct a :class:`FilteredSpace` from a declarative description."""
    if spec is None:
        spec = TreeSpec(horizon, tuple(branching or ()), tuple(weights or ()))
    T = int(spec.horizon)
    if T < 0:
        raise EmptyTree("horizon must be nonnegative")
    counts = list(spec.branching)
    if any(int(k) < 1 for k in counts):
        raise InvalidTreeSpec("every node needs at least one child")

    starts: list[list[int]] = [[] for _ in range(T + 1)]
    parents: list[list[int]] = [[] for _ in range(T)]
    pos = 0
    n_leaves = 0

    def walk(depth, parent):
        nonlocal pos, n_leaves
        if depth > 0:
            parents[depth - 1].append(parent)
        me = len(starts[depth])
        starts[depth].append(n_leaves)
        if depth == T:
            n_leaves += 1
            return
        if pos >= len(counts):
            raise InvalidTreeSpec("branching list is shorter than the tree needs")
        k = int(counts[pos])
        pos += 1
        for _ in range(k):
            walk(depth + 1, me)

    if T > 0 and not counts:
        raise EmptyTree("no branching counts given for a tree with T > 0")
    walk(0, -1)
    if pos != len(counts):
        raise InvalidTreeSpec(f"branching list has {len(counts) - pos} unused entries")

    w = np.asarray(spec.weights, dtype=float)
    if w.size == 0:
        raise EmptyTree("no leaf weights")
    if w.size != n_leaves:
        raise InvalidTreeSpec(f"{w.size} weights given for {n_leaves} leaves")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise NonPositiveWeight("leaf weights must be strictly positive")
    total = w.sum()
    if abs(total - 1.0) > weight_tol:
        raise WeightsDoNotSumToOne(f"leaf weights sum to {total!r}")
    if abs(total - 1.0) > 1e-12:
        w = w / total           # rounding-level sums are kept verbatim for round-trips
    return FilteredSpace(T, [np.array(s) for s in starts],
                         [np.array(p) for p in parents], w, counts)


def conditional_expectation(space: FilteredSpace, X, Q, t: int) -> np.ndarray:
    if not 0 <= t <= space.T:
        raise ValueError(f"time {t} outside 0..{space.T}")
    return space.cond_exp(space.check_vector(X, "X"), Q, t)


def nodewise_max(space: FilteredSpace, family, t: int) -> np.ndarray:
    """Atom-by-atom maximum of a finite family of F_t-measurable vectors."""
    family = [np.asarray(x, dtype=float) for x in family]
    if not family:
        raise EmptyFamily("nodewise_max needs at least one member")
    for i, x in enumerate(family):
        space.require_measurable(x, t, name=f"family member {i}")
    return np.max(np.stack(family), axis=0)


def density_process(space: FilteredSpace, Q, t: int) -> np.ndarray:
    """Z_t = E_P[dQ/dP | F_t]."""
    Z_T = np.asarray(Q, dtype=float) / space.P
    return space.cond_exp(Z_T, space.P, t)


# -- measures ------------------------------------------------------------

def check_measure(space: FilteredSpace, q, tol: float = CONSTRUCTION_TOL) -> np.ndarray:
    q = space.check_vector(q, "measure")
    if np.any(q < 0):
        raise ValueError("measure has negative weights")
    if abs(q.sum() - 1.0) > tol:
        raise ValueError(f"measure total mass {q.sum()!r} is not 1")
    return q


def is_equivalent(space: FilteredSpace, q) -> bool:
    return bool(np.all(np.asarray(q) > 0))


def reduces_to_P_at(space: FilteredSpace, q, t: int, tol=CONSTRUCTION_TOL) -> bool:
    """True if Q(A) = P(A) for every atom A of time ``t``."""
    return bool(np.all(np.abs(space.atom_sum(q, t) - space.atom_mass(t)) <= tol))


@dataclass(frozen=True)
class SubProbability:
    """mu = a * Q with a in [0, 1]; ``unique`` is False when a = 0."""
    a: float
    Q: np.ndarray = field(repr=False)
    unique: bool = True

    def weights(self) -> np.ndarray:
        return self.a * np.asarray(self.Q, dtype=float)
