#!/usr/bin/env python3
"""Inspect the two fiducial samplers on synthetic data.

Runs the specific-source chain on a 150-fragment panel and the
alternative-source chain on a 100-pane background, prints acceptance
rates and posterior-style summaries, and writes both chains to CSV.
"""

import numpy as np

from fidsource import (
    AlternativeParams,
    ChainConfig,
    SpecificParams,
    estimate_alt_params,
    estimate_t_hats,
    generate_alternative,
    generate_specific,
    sample_gf_alternative,
    sample_gf_specific,
)
from fidsource.kernels import chol_with_jitter

rng = np.random.default_rng(11)

pane = SpecificParams(np.array([5.0, 3.2]), np.array([[0.012, 0.0], [0.002, 0.010]]))
panel = generate_specific(pane, m=150, rng=rng)

chain_s = sample_gf_specific(panel, ChainConfig(n_iter=30_000, burn_in=6_000, seed=1))
print("specific-source chain")
print(f"  draws: {chain_s.n_draws}, per-coordinate acceptance: {chain_s.accept_rates.round(2)}")
print(f"  mean mu_s draw: {chain_s.mu.mean(axis=0).round(4)}  (sample mean {panel.mean.round(4)})")
print(f"  chain written to: {chain_s.to_csv('chain_specific.csv')}")

population = AlternativeParams(
    np.array([5.0, 3.2]),
    np.array([[0.050, 0.0], [0.015, 0.040]]),
    np.array([[0.012, 0.0], [0.003, 0.010]]),
    tau=5.0,
)
background = generate_alternative(population, n=100, m_i=3, rng=rng)
mu_hat, bbt_hat, cct_hat = estimate_alt_params(background)
t_hats = estimate_t_hats(background, mu_hat, chol_with_jitter(bbt_hat), cct_hat)

chain_a = sample_gf_alternative(
    background, t_hats, ChainConfig(n_iter=30_000, burn_in=6_000, seed=2)
)
print("\nalternative-source chain (between effects plugged in)")
print(f"  draws: {chain_a.n_draws}, per-coordinate acceptance: {chain_a.accept_rates.round(2)}")
print(f"  mean mu_a draw: {chain_a.mu.mean(axis=0).round(4)}  (grand mean {mu_hat.round(4)})")
cct_mean = chain_a.within_covariances().mean(axis=0)
rel = np.linalg.norm(cct_mean - cct_hat) / np.linalg.norm(cct_hat)
print(f"  mean within-covariance draw vs moment estimate: {rel:.1%} relative difference")
print(f"  chain written to: {chain_a.to_csv('chain_alternative.csv')}")
