"""Chain configuration and Monte Carlo error helpers.

The proposal scheme shared by the fiducial samplers is a Gaussian step on
one coordinate at a time, with per-coordinate scales adapted by
Robbins-Monro during burn-in (targeting a fixed acceptance rate) and frozen
afterwards; the compiled loops live in _chain_kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ChainConfig:
    """Chain length and tuning knobs shared by the fiducial samplers."""

    n_iter: int = 50_000
    burn_in: int = 10_000
    thin: int = 1
    seed: int = 0
    target_accept: float = 0.3
    init_scale: float = 0.2

    def validate(self):
        if self.burn_in < 0 or self.n_iter <= self.burn_in:
            raise ConfigError(
                f"need 0 <= burn_in < n_iter, got burn_in={self.burn_in}, n_iter={self.n_iter}"
            )
        if self.thin < 1:
            raise ConfigError(f"thin must be >= 1, got {self.thin}")
        if not 0 < self.target_accept < 1:
            raise ConfigError(f"target_accept must be in (0,1), got {self.target_accept}")
        return self


def batch_means_se(values, n_batches=20):
    """Monte Carlo standard error of the mean of a (correlated) sequence."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2 * n_batches:
        n_batches = max(2, n // 2)
    edges = np.linspace(0, n, n_batches + 1).astype(int)
    means = np.array([values[a:b].mean() for a, b in zip(edges[:-1], edges[1:])])
    return float(means.std(ddof=1) / np.sqrt(n_batches))
