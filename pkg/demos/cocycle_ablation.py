"""Lower one penalty entry by delta and watch the cocycle identity and strong
time consistency both break by exactly that amount.
"""
# %%
import numpy as np

from risktree import ablate_penalty, check_cocycle, check_strong_tc, random_structured_model
from risktree.timecons import random_battery

rng = np.random.default_rng(7)
sm = random_structured_model(rng, max_pairs=64)
print("intact cocycle:", check_cocycle(sm.model).summary())

# %%
for delta in (0.01, 0.05, 0.1):
    ab = ablate_penalty(sm.model, delta, rng)
    coc = check_cocycle(ab.model)
    B = np.vstack([ab.X0[None], random_battery(sm.space, 100, rng)])
    strong = check_strong_tc(ab.model, B)
    print(f"delta={delta:<5} pair={ab.pair} (s,u)=({ab.s},{ab.u}) atom={ab.atom}  "
          f"cocycle gap={coc.worst:.4f}  strong gap={strong.worst:.4f}")
