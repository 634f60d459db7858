#!/usr/bin/env python3
"""Why outcome-dependent selection biases quantile regression, and how the
instrumented correction removes it.

We simulate wages where the chance of observing an outcome rises with the
outcome itself (think: higher earners are more likely to hold the full-time
jobs we observe). Complete-case regression and a selection-on-observables
correction are both biased; the instrumented inverse-probability weighting
recovers the truth.
"""

import numpy as np

from selqr import (SimulationSpec, fit_mar, fit_semiparametric_iv,
                   fit_uncorrected, generate)

spec = SimulationSpec(setting="C", mechanism="M2", n=4000, reps=1, seed=7)
gd = generate(spec, 0)
data = gd.data

print(f"n = {data.n}, observed outcomes = {data.n_selected} "
      f"({100 * data.n_selected / data.n:.1f}%)")
print(f"true coefficients (intercept, x, w): {gd.theta_true}")
print()

fits = {
    "uncorrected (complete case)": fit_uncorrected(data, tau=0.5),
    "MAR probit-IPW": fit_mar(data, tau=0.5),
    "semiparametric IV": fit_semiparametric_iv(data, tau=0.5),
}

header = f"{'estimator':<28s} {'theta_hat':<26s} {'abs error':<22s}"
print(header)
print("-" * len(header))
for name, qf in fits.items():
    err = np.abs(qf.theta - gd.theta_true)
    print(f"{name:<28s} {np.array2string(qf.theta, precision=3):<26s} "
          f"{np.array2string(err, precision=3):<22s}")

print()
print("95% confidence intervals, semiparametric IV:")
qf = fits["semiparametric IV"]
for label, (lo, hi), truth in zip(qf.labels, qf.ci, gd.theta_true):
    inside = "covers truth" if lo <= truth <= hi else "misses truth"
    print(f"  {label:>10s}: [{lo:6.3f}, {hi:6.3f}]  ({inside})")

# the rule-of-thumb bandwidths behind the default intervals are
# conservative; cross-validated bandwidths tighten them substantially
qf_cv = fit_semiparametric_iv(data, tau=0.5, bandwidth_mode="cv")
print()
print("same fit with cross-validated density bandwidths:")
for label, (lo, hi) in zip(qf_cv.labels, qf_cv.ci):
    print(f"  {label:>10s}: [{lo:6.3f}, {hi:6.3f}]")

print()
print("Selection is strongest for low latent outcomes, so the complete-case")
print("median is pulled upward; the instrument-based weights undo the")
print("distortion without assuming any parametric selection model.")
