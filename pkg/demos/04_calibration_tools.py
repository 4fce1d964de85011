#!/usr/bin/env python3
"""Calibration diagnostics on synthetic evidence scores.

Shows the two calibration tools on a batch that is exactly calibrated by
construction and on a deliberately inflated copy of it: the density-ratio
discrepancy curve (zero means the claimed ratio matches observed
frequencies) and the empirical cross-entropy against its PAV-recalibrated
and uninformative references.
"""

import numpy as np

from fidsource import ScoreBatch, calibration_discrepancy, ece_curve, empirical_auc
from fidsource.diagnostics import calibrated_score_pair

rng = np.random.default_rng(5)
good = calibrated_score_pair(400, 400, rng, separation=1.5)
inflated = ScoreBatch(3.0 * good.hp_scores, 3.0 * good.hd_scores, "inflated")

for batch in (good, inflated):
    curve = calibration_discrepancy(batch, grid_size=40, rng=np.random.default_rng(1))
    frac = np.mean((curve.sim_lo <= 0.0) & (curve.sim_hi >= 0.0))
    print(f"{batch.method or 'calibrated':12s} AUC {empirical_auc(batch):.3f}  "
          f"zero inside simultaneous band at {frac:4.0%} of grid points  "
          f"median discrepancy range [{curve.median.min():+.2f}, {curve.median.max():+.2f}]")
    curve.to_csv(f"calibration_{batch.method or 'good'}.csv")

print()
for batch in (good, inflated):
    curves = ece_curve(batch)
    at_even = np.argmin(np.abs(curves.prior_log10_odds))
    print(f"{batch.method or 'calibrated':12s} ECE at even odds: "
          f"observed {curves.observed[at_even]:.3f}  "
          f"PAV-recalibrated {curves.calibrated[at_even]:.3f}  "
          f"uninformative {curves.null[at_even]:.3f}")
    curves.to_csv(f"ece_{batch.method or 'good'}.csv")

print("\nInflating scores exaggerates the claimed evidence: discrimination is")
print("unchanged but the discrepancy curve leaves zero and the observed ECE")
print("pulls away from its recalibrated reference.")
