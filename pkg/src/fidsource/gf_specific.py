"""Fiducial density and sampler for the specific-source Gaussian model.

The unnormalized fiducial log density is the Gaussian log likelihood of the
panel plus a data-dependent log Jacobian built from the Gram matrix of the
data-generating gradient.  The sampler is a componentwise adaptive
random-walk Metropolis chain over (mu, A), with A parameterized by its log
diagonal and free sub-diagonal entries so proposals live in an
unconstrained space.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import MeasurementPanel, SpecificParams, estimate_specific_params
from .errors import ChainInitializationFailed, SingularJacobian
from .kernels import LOG_2PI, chol_with_jitter
from .mcmc import ChainConfig

# Determinants below this floor are treated as structurally singular.
DET_FLOOR_LOG = np.log(1e-300)


def s_scatter(rows, mu):
    """Scatter of panel rows about mu: sum of (y_k - mu)(y_k - mu)'."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    dev = rows - np.asarray(mu, dtype=float)
    return dev.T @ dev


def _checked_slogdet(mat, context):
    sign, logdet = np.linalg.slogdet(mat)
    if sign <= 0 or logdet < DET_FLOOR_LOG:
        raise SingularJacobian(f"{context}: Gram matrix is numerically singular")
    return logdet


def gram_logdet_s(rows, mu):
    """Log determinant of the (p+p^2) block matrix
    [[m I_p, I⊗1'U], [I⊗U'1, I⊗U'U]] with U the rows centered at mu."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    m, p = rows.shape
    if m * p < p + p * p:
        raise SingularJacobian(
            f"m*p = {m * p} < p + p^2 = {p + p * p}: gradient Gram matrix is rank deficient"
        )
    u = rows - np.asarray(mu, dtype=float)
    usum = u.sum(axis=0)
    utu = u.T @ u
    dim = p + p * p
    gram = np.empty((dim, dim))
    eye = np.eye(p)
    gram[:p, :p] = m * eye
    gram[:p, p:] = np.kron(eye, usum[None, :])
    gram[p:, :p] = np.kron(eye, usum[:, None])
    gram[p:, p:] = np.kron(eye, utu)
    return _checked_slogdet(gram, "specific source")


def log_jacobian_s(rows, mu, a):
    """Log Jacobian-like factor: -p log det(A) + (1/2) log det(blockGram)
    - (p+p^2)/2 log m.  Singular when m*p < p + p^2."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    m, p = rows.shape
    a = np.asarray(a, dtype=float)
    sign, logdet_a = np.linalg.slogdet(a)
    if sign <= 0:
        raise SingularJacobian("A must have positive determinant")
    return -p * logdet_a + 0.5 * gram_logdet_s(rows, mu) - 0.5 * (p + p * p) * np.log(m)


def log_q_s(rows, params):
    """Unnormalized fiducial log density of (mu_s, A) given the panel rows."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if isinstance(params, SpecificParams):
        mu, a = params.mu_s, params.A
    else:
        mu, a = params
    m, p = rows.shape
    if m < 2:
        raise SingularJacobian("need at least two rows")
    mu = np.asarray(mu, dtype=float)
    a = np.asarray(a, dtype=float)
    scatter = s_scatter(rows, mu)
    half = np.linalg.solve(a, scatter)
    trace = np.trace(np.linalg.solve(a, half.T))
    logdet_aat = 2.0 * np.sum(np.log(np.diag(a)))
    return (
        -0.5 * m * p * LOG_2PI
        - 0.5 * (m + p) * logdet_aat
        - 0.5 * trace
        + 0.5 * gram_logdet_s(rows, mu)
        - 0.5 * (p + p * p) * np.log(m)
    )


class _SpecificTarget:
    """Fast equivalent of log_q_s for the sampler hot loop.

    Uses two exact identities: the block Gram determinant equals
    m^p det(S0)^p with S0 the scatter about the sample mean (so it is
    constant in mu), and S_s(mu) = S0 + m (ybar-mu)(ybar-mu)'.
    """

    def __init__(self, rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        self.m, self.p = rows.shape
        m, p = self.m, self.p
        if m * p < p + p * p:
            raise SingularJacobian(
                f"m*p = {m * p} < p + p^2 = {p + p * p}: gradient Gram matrix is rank deficient"
            )
        self.ybar = rows.mean(axis=0)
        dev = rows - self.ybar
        self.s0 = dev.T @ dev
        gram_logdet = p * np.log(m) + p * _checked_slogdet(self.s0, "specific source")
        self.const = 0.5 * gram_logdet - 0.5 * (p + p * p) * np.log(m) - 0.5 * m * p * LOG_2PI

    def scatter(self, mu):
        d = self.ybar - mu
        return self.s0 + self.m * np.outer(d, d)

    def log_q(self, mu, a, scatter=None):
        if scatter is None:
            scatter = self.scatter(mu)
        diag = np.diag(a)
        if np.any(diag <= 0):
            return -np.inf
        half = np.linalg.solve(a, scatter)
        trace = np.trace(np.linalg.solve(a, half.T))
        return self.const - (self.m + self.p) * np.sum(np.log(diag)) - 0.5 * trace


# ---------------------------------------------------------------------------
# state packing: x = [mu (p), log diag A (p), subdiagonal of A (row-major)]


def pack_factor(a):
    p = a.shape[0]
    return np.concatenate([np.log(np.diag(a)), a[np.tril_indices(p, -1)]])


def pack_tri(mu, a):
    return np.concatenate([mu, pack_factor(a)])


def unpack_tri(x, p, offset=0):
    """Read (log-diag, subdiag) factor coordinates starting at ``offset``."""
    a = np.zeros((p, p))
    a[np.diag_indices(p)] = np.exp(x[offset : offset + p])
    a[np.tril_indices(p, -1)] = x[offset + p : offset + p + p * (p - 1) // 2]
    return a


def tri_param_count(p):
    return p + p * (p - 1) // 2


@dataclass(frozen=True)
class SpecificChain:
    """Post burn-in draws of (mu_s, A) plus sampler diagnostics."""

    mu: np.ndarray  # (T, p)
    a: np.ndarray  # (T, p, p)
    log_q: np.ndarray  # (T,) values of log_q_s at each draw
    accept_rates: np.ndarray  # per coordinate, post burn-in
    scales: np.ndarray
    config: ChainConfig

    @property
    def n_draws(self):
        return self.mu.shape[0]

    @property
    def dim(self):
        return self.mu.shape[1]

    def params(self, i):
        return SpecificParams(self.mu[i], self.a[i])

    def to_params_list(self):
        return [self.params(i) for i in range(self.n_draws)]

    def to_csv(self, path):
        p = self.dim
        header = (
            ["iter"]
            + [f"mu_{i + 1}" for i in range(p)]
            + [f"a_{i + 1}{j + 1}" for i in range(p) for j in range(p)]
            + ["log_q"]
        )
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.n_draws):
                writer.writerow(
                    [t]
                    + [repr(float(v)) for v in self.mu[t]]
                    + [repr(float(v)) for v in self.a[t].ravel()]
                    + [repr(float(self.log_q[t]))]
                )
        return path


def sample_gf_specific(panel, config=None):
    """Adaptive random-walk Metropolis chain for the specific-source model.

    Starts at the moment estimates (sample mean, jittered Cholesky of the
    1/(m-1) scatter).  The log target in the unconstrained coordinates
    carries a +sum(log diag A) change-of-variables term so the recorded
    draws follow the fiducial law of (mu_s, A) itself; the recorded log_q
    column is log_q_s at each draw, without that term.
    """
    from ._chain_kernels import specific_chain_kernel

    rows = panel.rows if isinstance(panel, MeasurementPanel) else np.atleast_2d(np.asarray(panel, float))
    config = config or ChainConfig()
    config.validate()
    target = _SpecificTarget(rows)
    p = target.p

    mu_hat, aat_hat = estimate_specific_params(MeasurementPanel("init", rows))
    x0 = pack_tri(mu_hat, chol_with_jitter(aat_hat))
    draws, logq, rates, scales, status = specific_chain_kernel(
        target.ybar,
        target.s0,
        target.const,
        target.m,
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

    mu = draws[:, :p]
    n = draws.shape[0]
    a = np.zeros((n, p, p))
    ii = np.diag_indices(p)
    a[:, ii[0], ii[1]] = np.exp(draws[:, p : 2 * p])
    tt = np.tril_indices(p, -1)
    if tt[0].size:
        a[:, tt[0], tt[1]] = draws[:, 2 * p :]
    log_q_values = logq - draws[:, p : 2 * p].sum(axis=1)
    return SpecificChain(mu, a, log_q_values, rates, scales, config)


def _kernel_seed(seed):
    """Fold an arbitrary integer seed into the 32-bit range numba accepts."""
    return int(seed) & 0xFFFFFFFF
