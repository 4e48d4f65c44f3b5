"""Fit the labeled-data estimator and read off absolute risks.

The initial estimator solves the kernel-smoothed estimating equations on the
labeled subset alone: a coefficient vector plus a nonparametric monotone-in-
truth baseline h on the grid of observed follow-up times. Risk predictions
are g(h(t) + beta'z).
"""

import numpy as np

from sstm import (
    GaussianKernel,
    Link,
    SimulationSpec,
    fit_supervised,
    generate,
    predict_risk,
    recover_support,
)

dataset, truth = generate(SimulationSpec(n=800, N=800, seed=11, censoring_scale=9.036))
link = Link("probit")

fit = fit_supervised(dataset, link, GaussianKernel())
print(f"converged in {fit.iterations} sweeps, residual {fit.residual_norm:.2e}")
print("beta_hat :", np.round(fit.beta, 3))
print("beta_true:", truth.beta0)
print("support  :", [j + 1 for j in recover_support(fit)])

# the fitted baseline tracks the generator's transform up to boundary bias
grid_mid = fit.grid[(fit.grid > 1.0) & (fit.grid < 8.0)]
h_err = np.interp(grid_mid, fit.grid, fit.h_values) - truth.h0(grid_mid)
print(f"baseline error on (1, 8): median |h_hat - h_true| = {np.median(np.abs(h_err)):.3f}")

# five-year-style risk for a low-risk and a high-risk covariate profile
z_low = np.full(10, -0.5)
z_high = np.full(10, 0.5)
for t in [2.0, 4.0, 6.0]:
    r_low = predict_risk(fit, link, t, z_low, isotonic=True)
    r_high = predict_risk(fit, link, t, z_high, isotonic=True)
    print(f"risk by t={t:.0f}: low profile {r_low:.3f}, high profile {r_high:.3f}")
