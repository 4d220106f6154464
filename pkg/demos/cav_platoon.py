"""Data-driven PI on the connected automated vehicle platoon.

The learned gains are compared with the converged model-based gains.

    python demos/cav_platoon.py [seed]
"""

import sys

import numpy as np

from delay_adp import experiments as ex
from delay_adp.config import benchmark

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = benchmark("cav")

ref = ex.model_pi(cfg)[-1].improved
res = ex.data_pi(cfg, seed)
e0, e1 = ex.gain_errors(res.final_law, ref)

np.set_printoptions(precision=4, suppress=True)
print(f"data PI: {len(res.iterates)} iterations, converged = {res.converged}")
print("learned K0:", res.final_law.K0.ravel())
print("model   K0:", ref.K0.ravel())
print(f"relative K0 error {e0:.2e}, sup K1 error {e1:.2e}")
print(f"cost: initial {ex.policy_cost(cfg, cfg.initial_law(), seed).cost:.1f}, "
      f"learned {ex.policy_cost(cfg, res.final_law, seed).cost:.1f}, "
      f"model {ex.policy_cost(cfg, ref, seed).cost:.1f}")
