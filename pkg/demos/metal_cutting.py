"""Learn a chatter-suppressing controller for the metal-cutting plant from data.

Runs model-based PI for reference, then data-driven PI on recorded
exploratory episodes, and compares the learned law with the initial law and
with a DLQR controller designed on a semi-discretization (dt_d = 0.1).

    python demos/metal_cutting.py [seed]
"""

import sys

import numpy as np

from delay_adp import experiments as ex
from delay_adp.config import benchmark

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = benchmark("metal-cutting")

steps = ex.model_pi(cfg)
opt = steps[-1].improved
print(f"model PI: {len(steps)} iterations, K0* = {np.round(opt.K0.ravel(), 4)}")

trajs = ex.collect_episodes(cfg, seed)
print(f"recorded {len(trajs)} episodes of {cfg.horizon} s at dt = {cfg.dt}")

res = ex.data_pi(cfg, seed, trajs=trajs)
print("\niter   change      residual   min eig    cost")
for i, it in enumerate(res.iterates, 1):
    change = "-" if not np.isfinite(it.change) else f"{it.change:.3e}"
    cost = ex.policy_cost(cfg, it.law, seed).cost
    print(f"{i:4d}   {change:>10}  {it.residual:.3e}  {it.min_eig:.2e}  {cost:9.1f}")

print(f"\nlearned K0 = {np.round(res.final_law.K0.ravel(), 4)}, converged = {res.converged}")
print("\npolicy     cost        spectral radius")
for row in ex.compare(cfg, seed, res):
    print(f"{row['policy']:<9}  {row['cost']:10.1f}  {row['spectral_radius']:.4f}")
print(f"optimal    {ex.policy_cost(cfg, opt, seed).cost:10.1f}")
