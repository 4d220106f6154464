"""Effect of state-measurement noise on data-driven PI for metal cutting.

Every recorded state sample is replaced by x + w with w ~ N(0, sigma^2 I).

    python demos/noise_study.py [seed]
"""

import sys

from delay_adp import experiments as ex
from delay_adp.config import benchmark

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = benchmark("metal-cutting")

rows = ex.noise_study(cfg, [0.0, 0.2 ** 0.5, 1.0], seed)
base = rows[0]["cost"]
print("variance  iterations  converged  cost       vs noise-free")
for r in rows:
    print(f"{r['variance']:8.2f}  {r['iterations']:10d}  {str(r['converged']):9}  "
          f"{r['cost']:9.1f}  {r['cost'] / base - 1:+.1%}")
