"""Large-unlabeled regime: space collapse and soft-threshold intervals.

With n much smaller than N, the combined estimator's error concentrates
along the fitted direction, so coordinates orthogonal to it (the zero
coefficient here) become super-efficient and their raw replicate quantiles
stop being usable. The norm-preserving soft-threshold plus sign-preserving
re-centering restores valid intervals; the threshold is tuned by
cross-validated rank correlation.
"""

import numpy as np

from sstm import SimulationSpec, fit_ssl, generate, soft_threshold_std

dataset, truth = generate(SimulationSpec(n=500, N=6000, seed=41, censoring_scale=9.036))

result = fit_ssl(dataset, link="probit", B=200, seed=41)
ssl = result.ssl
print(f"resolved regime: {result.regime}")
print(f"cross-validated lambda_soft: {ssl.lambda_soft_used:.4f}")

err_d = np.abs(ssl.beta_delta - truth.beta0)
err_s = np.abs(ssl.beta_ssl - truth.beta0)
print("\nper-coordinate |error|: supervised -> semi-supervised")
for j in range(dataset.p):
    tag = " (true zero)" if truth.beta0[j] == 0 else ""
    print(f"  beta_{j + 1:<2} {err_d[j]:.4f} -> {err_s[j]:.4f}{tag}")

print("\nstandardized estimate:", np.round(ssl.beta_std, 3))
print("norm preserved:",
      f"|beta_ssl| = {np.linalg.norm(ssl.beta_ssl):.4f},",
      f"|beta_std| = {np.linalg.norm(ssl.beta_std):.4f}")

print("\ncoord  est     95% CI              conservative")
for c in result.report.coordinates:
    print(
        f"{c.index + 1:>5}  {c.estimate: .3f}  ({c.ci_lower: .3f}, {c.ci_upper: .3f})"
        f"  {'yes (thresholded to zero)' if c.conservative else 'no'}"
    )

# the same threshold applied across a grid shows the zero coordinate dying
# first while the signal coordinates barely move
print("\nzeroed coordinates along the threshold grid:")
for lam in [0.001, 0.005, 0.02]:
    z = np.flatnonzero(soft_threshold_std(ssl.beta_ssl, lam) == 0.0)
    print(f"  lambda={lam:<6} zeroed: {[int(j) + 1 for j in z]}")
