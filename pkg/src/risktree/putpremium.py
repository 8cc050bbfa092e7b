"""Put-premium risk measure rho_t(X) = gamma_t^{-1} E_P[(-X)^+ | F_t]."""
from __future__ import annotations

import itertools

import numpy as np

from .dynamic import DualModel, RiskModel
from .errors import GammaNotGreaterThanOne, NotMeasurable
from .tree import FilteredSpace

MAX_DUAL_LEAVES = 8


class PutPremiumModel(RiskModel):
    """Closed-form evaluation; ``gamma`` holds one F_t-measurable vector per time."""

    name = "put-premium"

    def __init__(self, space: FilteredSpace, gamma):
        super().__init__(space)
        g = np.asarray(gamma, dtype=float)
        if g.ndim == 0:
            g = np.full((space.T + 1, space.n_leaves), float(g))
        if g.shape != (space.T + 1, space.n_leaves):
            raise ValueError("gamma needs one leaf vector per time")
        if np.any(~np.isfinite(g)) or np.any(g <= 1):
            raise GammaNotGreaterThanOne("gamma_t must exceed 1 everywhere")
        for t in space.times:
            if not space.is_measurable(g[t], t):
                raise NotMeasurable(f"gamma_{t} is not F_{t}-measurable")
        self.gamma = g
        self.gamma.setflags(write=False)

    def _nodes(self, X, t, u):
        sp = self.space
        put = np.maximum(-X, 0.0) * sp.P
        return sp.atom_sum(put, t) / sp.atom_mass(t) / sp.node_values(self.gamma[t], t)

    def to_dual(self) -> DualModel:
        """Exact dual family over all leaf subsets; small trees only.

        Subset ``S`` contributes ``Q = P(. | S)`` and, on an atom ``A`` of
        time ``t``, ``D_{t,u} = P(S & A) / (gamma_t P(A))`` with zero penalty.
        """
        sp = self.space
        L, T1 = sp.n_leaves, sp.T + 1
        if L > MAX_DUAL_LEAVES:
            raise ValueError(f"dual encoding limited to {MAX_DUAL_LEAVES} leaves")
        subsets = list(itertools.product([0.0, 1.0], repeat=L))
        N = len(subsets)
        Q = np.empty((N, L))
        D = np.zeros((N, T1, T1, L))
        for i, s in enumerate(subsets):
            s = np.asarray(s)
            mass = (sp.P * s).sum()
            Q[i] = sp.P * s / mass if mass > 0 else sp.P
            for t in range(T1):
                frac = sp.expand(sp.atom_sum(sp.P * s, t) / sp.atom_mass(t), t)
                D[i, t, t:] = frac / self.gamma[t]
        names = ["S" + "".join(str(int(v)) for v in s) for s in subsets]
        return DualModel(sp, D, Q, np.zeros((N, T1, T1, L)), names=names)


def put_premium_model(gamma, space: FilteredSpace) -> PutPremiumModel:
    return PutPremiumModel(space, gamma)
