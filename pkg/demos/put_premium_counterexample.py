"""The put-premium measure on a two-period binary tree.

It is weakly and weak*-time consistent but not strongly time consistent.
Run with ``python demos/put_premium_counterexample.py``.
"""
# %%
import numpy as np

from risktree import check_strong_tc, check_weak_star_tc, check_weak_tc
from risktree.fixtures import put_premium
from risktree.timecons import check_sign_inequalities, random_battery

model = put_premium()
sp = model.space
print("leaves:", sp.n_leaves, " P:", sp.P)

# %% a loss of one unit in every scenario
X = -np.ones(sp.n_leaves)
direct = model.rho(X, 0)[0]
two_step = model.rho(-model.rho(X, 1), 0)[0]
print(f"rho_0(X) = {direct:.4f}   rho_0(-rho_1(X)) = {two_step:.4f}")

# %% the strong check reports the same gap at (s, t, u) = (0, 1, 2)
strong = check_strong_tc(model, X[None])
print(strong.summary())
print("(0,1,2):", strong.item("(0,1,2)").violation)

# %% the weaker notions survive a random battery
rng = np.random.default_rng(0)
B = random_battery(sp, 100, rng)
weak = check_weak_tc(model, battery=B)
star = check_weak_star_tc(model, battery=B)
print(weak.summary(), " non-vacuous:", weak.info["nonvacuous"])
print(star.summary())

# %% sign-dependent inequality between the one-shot and nested values
signs = check_sign_inequalities(model, np.vstack([np.abs(B[:50]), B[50:]]))
print(signs.summary(), {k: signs.info[k] for k in ("n_le", "n_ge", "n_strict")})
