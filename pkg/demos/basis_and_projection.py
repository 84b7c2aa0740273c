"""Cosine basis, projection and the Neumann heat semigroup."""

import numpy as np

from ouspde import BasisSpec, eigenvalue, project_all, reconstruct
from ouspde.simulator import heat_semigroup

spec = BasisSpec(16, 1024)   # modes 0..16 on a 1024-point grid
x = spec.grid

# eigenvalues lambda_n = n^2 pi^2 / 2
print("lambda_0..3:", [round(eigenvalue(spec, n), 4) for n in range(4)])

# x^2 has coefficients (-1)^n 2 sqrt(2) / (n pi)^2 for n >= 1
coef = project_all(x**2, spec)
n = np.arange(1, 6)
print("projected:", np.round(coef[1:6], 6))
print("closed form:", np.round((-1.0) ** n * 2 * np.sqrt(2) / (n * np.pi) ** 2, 6))

# truncation error of the reconstruction
err = np.max(np.abs(reconstruct(coef, spec) - x**2))
print(f"sup error with K=16: {err:.2e}")

# the heat flow keeps the mean and flattens the rest
u = heat_semigroup(x**2, 0.1, spec)
c0, c1 = project_all(x**2, spec)[:2], project_all(u, spec)[:2]
print(f"mode 0 before {c0[0]:.4f}, after {c1[0]:.4f}")
print(f"mode 1 before {c0[1]:.4f}, after {c1[1]:.4f}, factor {np.exp(-eigenvalue(spec, 1) * 0.1):.4f}")
