"""Fiducial density and sampler for the alternative-source random-effects model.

The density is conditional on plug-in between-source effects (the
least-squares t-hat vectors): the Gaussian likelihood of the residuals
y - mu_a - B t_i plus a Jacobian term built from the Gram matrix of the
gradient with respect to (mu_a, B, C).  The sampler mirrors the
specific-source chain: componentwise adaptive random walk over
(mu_a, log-diag/sub-diag of B, log-diag/sub-diag of C).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import AlternativeParams, estimate_alt_params
from .errors import ChainInitializationFailed, SingularJacobian
from .gf_specific import _kernel_seed, pack_factor, tri_param_count
from .kernels import LOG_2PI, chol_with_jitter
from .mcmc import ChainConfig

DET_FLOOR_LOG = np.log(1e-300)


def a_scatter(data, mu_a, b, t_list):
    """Residual scatter: sum over sources and rows of
    (y - mu_a - B t_i)(y - mu_a - B t_i)'."""
    t_list = np.atleast_2d(np.asarray(t_list, dtype=float))
    if t_list.shape[0] != data.n:
        raise ValueError(f"need one t per source: {t_list.shape[0]} != {data.n}")
    rows, idx = data.stacked()
    resid = rows - np.asarray(mu_a, float) - t_list[idx] @ np.asarray(b, float).T
    return resid.T @ resid


class _AltStats:
    """Sufficient statistics of (data, t_hats) for the fiducial density."""

    def __init__(self, data, t_hats):
        t_hats = np.atleast_2d(np.asarray(t_hats, dtype=float))
        if t_hats.shape[0] != data.n:
            raise ValueError(f"need one t per source: {t_hats.shape[0]} != {data.n}")
        rows, idx = data.stacked()
        counts = data.counts
        self.n_rows, self.p = rows.shape
        self.sum_y = rows.sum(axis=0)
        self.syy = rows.T @ rows
        per_source_sums = np.vstack([s.rows.sum(axis=0) for s in data.sources])
        self.sum_t = counts @ t_hats
        self.stt = (t_hats * counts[:, None]).T @ t_hats
        self.sty = t_hats.T @ per_source_sums  # sum over rows of t_i y'

    def blocks(self, mu, b):
        """(qsum, WQ, QQ): residual column sums, cross block, residual Gram."""
        big_n = self.n_rows
        bst = b @ self.sum_t
        qsum = self.sum_y - big_n * mu - bst
        wq = self.sty - np.outer(self.sum_t, mu) - self.stt @ b.T
        qq = (
            self.syy
            - np.outer(self.sum_y, mu)
            - np.outer(mu, self.sum_y)
            + big_n * np.outer(mu, mu)
            - self.sty.T @ b.T
            - b @ self.sty
            + np.outer(mu, bst)
            + np.outer(bst, mu)
            + b @ self.stt @ b.T
        )
        return qsum, wq, qq

    def small_gram(self, mu, b):
        """(1+2p) Gram [[N, S_t', qsum'], [S_t, W'W, W'Q], [qsum, Q'W, Q'Q]].

        The full (p+2p^2) block Gram is a row/column permutation of
        I_p kron this matrix, so its log determinant is p times this one's.
        """
        qsum, wq, qq = self.blocks(mu, b)
        p = self.p
        g = np.empty((1 + 2 * p, 1 + 2 * p))
        g[0, 0] = self.n_rows
        g[0, 1 : 1 + p] = self.sum_t
        g[0, 1 + p :] = qsum
        g[1 : 1 + p, 0] = self.sum_t
        g[1 + p :, 0] = qsum
        g[1 : 1 + p, 1 : 1 + p] = self.stt
        g[1 : 1 + p, 1 + p :] = wq
        g[1 + p :, 1 : 1 + p] = wq.T
        g[1 + p :, 1 + p :] = qq
        return g, qq


def _full_gram(stats, mu, b):
    """The (p+2p^2) block Gram matrix exactly as displayed."""
    qsum, wq, qq = stats.blocks(mu, b)
    p = stats.p
    eye = np.eye(p)
    dim = p + 2 * p * p
    g = np.empty((dim, dim))
    g[:p, :p] = stats.n_rows * eye
    g[:p, p : p + p * p] = np.kron(eye, stats.sum_t[None, :])
    g[:p, p + p * p :] = np.kron(eye, qsum[None, :])
    g[p : p + p * p, :p] = np.kron(eye, stats.sum_t[:, None])
    g[p + p * p :, :p] = np.kron(eye, qsum[:, None])
    g[p : p + p * p, p : p + p * p] = np.kron(eye, stats.stt)
    g[p : p + p * p, p + p * p :] = np.kron(eye, wq)
    g[p + p * p :, p : p + p * p] = np.kron(eye, wq.T)
    g[p + p * p :, p + p * p :] = np.kron(eye, qq)
    return g


def log_jacobian_a(data, mu_a, b, c, t_list):
    """Log Jacobian-like factor for the alternative model:
    -p log det(C) + (1/2) log det(blockGram) - (p+2p^2)/2 log N."""
    stats = _AltStats(data, t_list)
    p = stats.p
    if stats.n_rows * p < p + 2 * p * p:
        raise SingularJacobian(
            f"N*p = {stats.n_rows * p} < p + 2p^2 = {p + 2 * p * p}: Gram is rank deficient"
        )
    c = np.asarray(c, dtype=float)
    sign, logdet_c = np.linalg.slogdet(c)
    if sign <= 0:
        raise SingularJacobian("C must have positive determinant")
    gram = _full_gram(stats, np.asarray(mu_a, float), np.asarray(b, float))
    sign, logdet = np.linalg.slogdet(gram)
    if sign <= 0 or logdet < DET_FLOOR_LOG:
        raise SingularJacobian("alternative-source Gram matrix is singular")
    return -p * logdet_c + 0.5 * logdet - 0.5 * (p + 2 * p * p) * np.log(stats.n_rows)


def log_q_a(data, params, t_hats):
    """Unnormalized fiducial log density of (mu_a, B, C) given data and plug-in effects."""
    stats = _AltStats(data, t_hats)
    p, big_n = stats.p, stats.n_rows
    if data.n < 2:
        raise SingularJacobian("need at least two sources")
    if big_n * p < p + 2 * p * p:
        raise SingularJacobian("N too small: Gram matrix is rank deficient")
    mu = np.asarray(params.mu_a, dtype=float)
    b = np.asarray(params.B, dtype=float)
    c = np.asarray(params.C, dtype=float)
    small, qq = stats.small_gram(mu, b)
    sign, small_logdet = np.linalg.slogdet(small)
    if sign <= 0 or p * small_logdet < DET_FLOOR_LOG:
        raise SingularJacobian("alternative-source Gram matrix is singular")
    half = np.linalg.solve(c, qq)
    trace = np.trace(np.linalg.solve(c, half.T))
    logdet_cct = 2.0 * np.sum(np.log(np.diag(c)))
    return (
        -0.5 * p * big_n * LOG_2PI
        - 0.5 * (big_n + p) * logdet_cct
        - 0.5 * trace
        + 0.5 * p * small_logdet
        - 0.5 * (p + 2 * p * p) * np.log(big_n)
    )


@dataclass(frozen=True)
class AlternativeChain:
    """Post burn-in draws of (mu_a, B, C) plus sampler diagnostics."""

    mu: np.ndarray  # (T, p)
    b: np.ndarray  # (T, p, p)
    c: np.ndarray  # (T, p, p)
    log_q: np.ndarray
    accept_rates: np.ndarray
    scales: np.ndarray
    config: ChainConfig
    tau: float = 5.0

    @property
    def n_draws(self):
        return self.mu.shape[0]

    @property
    def dim(self):
        return self.mu.shape[1]

    def params(self, i):
        return AlternativeParams(self.mu[i], self.b[i], self.c[i], tau=self.tau)

    def to_params_list(self):
        return [self.params(i) for i in range(self.n_draws)]

    def within_covariances(self):
        """Stacked CC' per draw."""
        return np.einsum("tij,tkj->tik", self.c, self.c)

    def to_csv(self, path):
        p = self.dim
        header = (
            ["iter"]
            + [f"mu_{i + 1}" for i in range(p)]
            + [f"b_{i + 1}{j + 1}" for i in range(p) for j in range(p)]
            + [f"c_{i + 1}{j + 1}" for i in range(p) for j in range(p)]
            + ["log_q"]
        )
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.n_draws):
                writer.writerow(
                    [t]
                    + [repr(float(v)) for v in self.mu[t]]
                    + [repr(float(v)) for v in self.b[t].ravel()]
                    + [repr(float(v)) for v in self.c[t].ravel()]
                    + [repr(float(self.log_q[t]))]
                )
        return path


def sample_gf_alternative(data, t_hats, config=None, tau=5.0):
    """Adaptive random-walk Metropolis chain for the alternative-source model.

    ``t_hats`` stay fixed for the whole chain (the plug-in strategy that
    replaces the intractable expectation over all between-source effects).
    B and C evolve as separate coordinate blocks since their conditional
    scales differ.  Starts at the moment estimates of (mu_a, B, C).
    """
    from ._chain_kernels import alternative_chain_kernel

    config = config or ChainConfig()
    config.validate()
    stats = _AltStats(data, t_hats)
    p = stats.p
    if stats.n_rows * p < p + 2 * p * p:
        raise SingularJacobian("N too small: Gram matrix is rank deficient")
    tri = tri_param_count(p)

    mu_hat, bbt_hat, cct_hat = estimate_alt_params(data)
    x0 = np.concatenate(
        [
            mu_hat,
            pack_factor(chol_with_jitter(bbt_hat)),
            pack_factor(chol_with_jitter(cct_hat)),
        ]
    )
    draws, logq, rates, scales, status = alternative_chain_kernel(
        float(stats.n_rows),
        stats.sum_y,
        stats.syy,
        stats.sum_t,
        stats.stt,
        stats.sty,
        x0,
        config.n_iter,
        config.burn_in,
        config.thin,
        config.target_accept,
        config.init_scale,
        _kernel_seed(config.seed),
        100,
    )
    if status != 0:
        raise ChainInitializationFailed("no finite log-density start in 100 attempts")

    n = draws.shape[0]
    mu = draws[:, :p]
    b = np.zeros((n, p, p))
    c = np.zeros((n, p, p))
    ii = np.diag_indices(p)
    tt = np.tril_indices(p, -1)
    b[:, ii[0], ii[1]] = np.exp(draws[:, p : 2 * p])
    c[:, ii[0], ii[1]] = np.exp(draws[:, p + tri : p + tri + p])
    if tt[0].size:
        b[:, tt[0], tt[1]] = draws[:, 2 * p : p + tri]
        c[:, tt[0], tt[1]] = draws[:, p + tri + p :]
    log_q_values = logq - draws[:, p : 2 * p].sum(axis=1) - draws[:, p + tri : p + tri + p].sum(axis=1)
    return AlternativeChain(mu, b, c, log_q_values, rates, scales, config, tau=tau)
