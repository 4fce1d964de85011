#!/usr/bin/env python3
"""A miniature version of the comparative simulation study.

Runs a reduced design-2 batch (casework-sized specific panels, m = 3) on
the synthetic glass fixture, prints the per-method score summaries, and
emits plot-data CSVs (boxplot quantiles and AUC distributions) into
./study_output/.

The full desk-scale run is `fidsource simulate --design 2 --scale desk`.
"""

import numpy as np

from fidsource import DesignConfig, EngineSettings, emit_plot_data, run_design, score_batches
from fidsource.diagnostics import empirical_auc

engines = EngineSettings(
    gf_n_iter=6_000,
    gf_burn_in=1_500,
    alt_n_iter=6_000,
    alt_burn_in=1_500,
    n_importance=512,
    denominator_thin=400,
    gibbs_sweeps=3_000,
    gibbs_burn_in=800,
)
config = DesignConfig.preset(
    2,
    "desk",
    n_hp_trials=12,
    n_hd_trials=24,
    n=60,
    engines=engines,
    master_seed=99,
    outdir="study_output",
)

print(f"design {config.design_id}: {config.n_trials} trials "
      f"(m = {config.m} fragments per specific panel)")
results, manifest = run_design(config)
failed = manifest["failed_trials"]
print(f"finished; {len(failed)} trial(s) with engine failures {failed}\n")

print(f"{'method':8s} {'AUC':>6s} {'median Hp':>10s} {'median Hd':>10s}")
for method, batch in score_batches(results).items():
    print(
        f"{method:8s} {empirical_auc(batch):6.3f} "
        f"{np.median(batch.hp_scores):10.2f} {np.median(batch.hd_scores):10.2f}"
    )

for kind in ("boxplot", "auc"):
    paths = emit_plot_data(results, kind, "study_output", seed=1)
    for path in paths:
        print(f"wrote {path}")
