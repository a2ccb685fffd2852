"""
Two instruments, two LATEs
==========================

Six observations where each instrument moves a different group of compliers.
The instrument-specific Wald ratios disagree, so the over-identifying moment
condition cannot hold and the conventional 2SLS standard error is too small.
"""

import numpy as np

from ivrobust import design_from_arrays, fit_2sls, j_test, sigma_c, sigma_mr

# columns: Y, D, Z1, Z2
rows = np.array([[2, 1, 1, 0], [0, 0, 1, 0], [4, 1, 0, 1], [0, 0, 0, 1], [0, 0, 0, 0], [0, 0, 0, 0]], float)
y, d, z = rows[:, 0], rows[:, 1], rows[:, 2:]

# Wald ratio for each instrument against the Z = 0 cell
for j in range(2):
    on, off = z[:, j] == 1, z.sum(axis=1) == 0
    wald = (y[on].mean() - y[off].mean()) / (d[on].mean() - d[off].mean())
    print(f"Wald ratio for Z{j + 1}: {wald:g}")

design = design_from_arrays(y, d, z)
est = fit_2sls(design)
print("2SLS:", est.beta)

# the sample moment n^-1 Z'e is not zero at the estimate
print("n^-1 Z'e:", design.Z.T @ est.residuals / design.n)

c, mr = sigma_c(est, design), sigma_mr(est, design)
print(f"SE conventional: {c.se[-1]:.4f}")
print(f"SE robust to multiple LATEs: {mr.se[-1]:.4f}")

j = j_test(est, design)
print(f"J = {j.stat:g} on {j.dof} dof, p = {j.pvalue:.4f}")
