"""Importance-sampled mass and second moments of the mixture kernel."""

import numpy as np

from ouspde import BasisSpec, CovarianceField, moment_mc, total_mass_mc
from ouspde.operators import inner_product_example

op = inner_product_example(alpha=0.9, amplitude=0.3)
x = np.zeros(9)                   # start at zero, K = 8

# mass stays near one for every K and t
for K in (4, 8, 16):
    field = CovarianceField(op, BasisSpec(K, 256))
    for t in (0.01, 0.1):
        m = total_mass_mc(t, np.zeros(K + 1), field, n_samples=20_000, seed=1)
        print(f"K={K:2d} t={t:<5} mass {m.estimate:.4f} +- {m.stderr:.4f}")

# second moment of w_1 grows roughly like t for small t
field = CovarianceField(op, BasisSpec(8, 256))
ts = np.array([1e-3, 1e-2, 1e-1])
est = [moment_mc(t, x, field, j=1, p=1, n_samples=20_000, seed=2).estimate for t in ts]
slope = np.polyfit(np.log(ts), np.log(est), 1)[0]
print("E|w_1|^2:", np.round(est, 6), f"log-log slope {slope:.3f}")
