"""
When 2SLS is not a weighted average of LATEs
============================================

With mutually exclusive instrument indicators, the weight on instrument j is
proportional to Cov(D, Z_j). An instrument whose cell has a below-average
treatment share gets a negative weight, and the 2SLS target then lies outside
the range of the LATEs.
"""

from ivrobust import heterogeneous_config, population_estimand

good = population_estimand(heterogeneous_config())
print("symmetric design  LATEs", good.late, "weights", good.xi, "rho0", good.rho0)

cfg = heterogeneous_config(type_probs=(0.4, 0.0, 0.1, 0.5), instrument_probs=(0.1, 0.45, 0.45))
bad = population_estimand(cfg)
print("lopsided design   LATEs", bad.late, "weights", bad.xi.round(4), "rho0", round(bad.rho0, 4))
print("Cov(D, Z_j):", bad.first_stage_cov)
for f in bad.flags:
    print("note:", f)
