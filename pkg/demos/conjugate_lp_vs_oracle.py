"""Minimal penalty of a static dictionary: hull LP against a brute-force grid
search of the conjugate sup_X {-E_mu[X] - rho(X)}.
"""
# %%
import numpy as np

from risktree import conjugate_grid_oracle, minimal_penalty_static, oracle_diverges
from risktree.fixtures import two_pair_static

rm = two_pair_static()
d = rm.dictionary
print("dictionary measures:\n", d.measures, "\npenalties:", d.c)

# %% inside the hull the two agree to within twice the grid step
n, box = 21, 10.0
step = 2 * box / (n - 1)
for w in (0.0, 0.3, 1.0):
    mu = w * d.measures[0] + (1 - w) * d.measures[1]
    lp = minimal_penalty_static(rm, mu)
    grid = conjugate_grid_oracle(rm, mu, box, n)
    print(f"w={w:.1f}  LP={lp:.4f}  grid={grid:.4f}  bound={2 * step:.2f}")

# %% outside the hull the LP says +inf and the grid value keeps growing with the box
mu = np.array([0.5, 0.1, 0.1, 0.1])
grows, vals = oracle_diverges(rm, mu, n)
print("LP:", minimal_penalty_static(rm, mu), " grid over boxes 1/10/100:",
      np.round(vals, 3), " divergent:", grows)
