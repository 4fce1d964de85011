"""Conjugate-prior Bayes factor via a defense-posterior Gibbs sampler.

The Bayesian model mirrors the fiducial one but with a Gaussian (not
heavy-tailed) between-source effect and proper conjugate priors: Gaussian
means, inverse-Wishart covariances.  The Bayes factor is computed as the
posterior expectation, under the defense hypothesis (unknown rows appended
to the background data as one extra source), of the likelihood ratio of the
unknown rows under the two models.

Each conditional update's parameters are exposed as plain helpers so tests
can check them against independently derived closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ChainInitializationFailed, ConfigError, NotPositiveDefinite
from .gff import LN10, log_mean_and_se
from .kernels import chol_factor, chol_with_jitter, mvn_logpdf_chol, sample_inv_wishart
from .mcmc import ChainConfig


@dataclass(frozen=True)
class PriorSpec:
    """Conjugate prior hyperparameters for both source models."""

    mu_pi: np.ndarray
    Sigma_b: np.ndarray
    Sigma_e: np.ndarray
    nu_b: float
    nu_e: float
    k: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mu_pi", np.asarray(self.mu_pi, dtype=float))
        object.__setattr__(self, "Sigma_b", np.asarray(self.Sigma_b, dtype=float))
        object.__setattr__(self, "Sigma_e", np.asarray(self.Sigma_e, dtype=float))
        p = self.mu_pi.shape[0]
        chol_factor(self.Sigma_b)
        chol_factor(self.Sigma_e)
        if self.nu_b <= p - 1 or self.nu_e <= p - 1:
            raise ConfigError(f"inverse-Wishart degrees of freedom must exceed p-1 = {p - 1}")
        if self.k <= 0:
            raise ConfigError("k must be positive")

    @property
    def dim(self):
        return self.mu_pi.shape[0]

    def to_dict(self):
        return {
            "mu_pi": self.mu_pi.tolist(),
            "Sigma_b": self.Sigma_b.tolist(),
            "Sigma_e": self.Sigma_e.tolist(),
            "nu_b": float(self.nu_b),
            "nu_e": float(self.nu_e),
            "k": float(self.k),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            mu_pi=np.asarray(d["mu_pi"], float),
            Sigma_b=np.asarray(d["Sigma_b"], float),
            Sigma_e=np.asarray(d["Sigma_e"], float),
            nu_b=float(d["nu_b"]),
            nu_e=float(d["nu_e"]),
            k=float(d.get("k", 1.0)),
        )


PRESET_FLAVORS = ("prosecution", "defense")
PROSECUTION_SIGMA_B_FACTOR = 100.0
DEFENSE_SIGMA_B_FACTOR = 0.01
DEFENSE_NU_E = 200.0


def prior_preset(flavor, mu_a_hat, bbt_hat, cct_hat):
    """Prosecution- or defense-leaning prior built from background summaries.

    Prosecution: diffuse prior on the specific mean (large Sigma_b) and a
    minimally proper nu_e, letting the specific model stretch toward the
    unknown rows.  Defense: tight Sigma_b and a large nu_e pinning the
    within covariance, making the unknown rows look unlike the specific
    source.  Both center mu_pi at the background grand mean and set the
    prior mean of the within covariance to its moment estimate.
    """
    if flavor not in PRESET_FLAVORS:
        raise ConfigError(f"unknown prior flavor {flavor!r}; expected one of {PRESET_FLAVORS}")
    mu_a_hat = np.asarray(mu_a_hat, dtype=float)
    p = mu_a_hat.shape[0]
    if flavor == "prosecution":
        sigma_b = PROSECUTION_SIGMA_B_FACTOR * np.asarray(bbt_hat, float)
        nu_e = float(p + 2)
    else:
        sigma_b = DEFENSE_SIGMA_B_FACTOR * np.asarray(bbt_hat, float)
        nu_e = DEFENSE_NU_E
    sigma_e = np.asarray(cct_hat, float) * (nu_e - p - 1)
    return PriorSpec(
        mu_pi=mu_a_hat,
        Sigma_b=sigma_b,
        Sigma_e=sigma_e,
        nu_b=float(p + 2),
        nu_e=nu_e,
        k=1.0,
    )


@dataclass
class GibbsState:
    """Current values of all parameter blocks and latent effects."""

    mu_s: np.ndarray
    aat: np.ndarray
    mu_a: np.ndarray
    bbt: np.ndarray
    cct: np.ndarray
    bt: np.ndarray  # (n+1, p) between effects, appended source last
    cv: np.ndarray  # (N + m_u, p) within effects, one per observation


class BfCaseData:
    """Stacked view of a case with the unknown appended as the last source."""

    def __init__(self, case):
        self.y_s = case.specific.rows
        self.m = self.y_s.shape[0]
        self.ybar_s = self.y_s.mean(axis=0)
        self.y_u = case.unknown.rows
        self.m_u = self.y_u.shape[0]
        alt_rows, alt_idx = case.alternative.stacked()
        self.rows = np.vstack([alt_rows, self.y_u])
        self.idx = np.concatenate([alt_idx, np.full(self.m_u, case.alternative.n)])
        self.counts = np.concatenate([case.alternative.counts, [self.m_u]])
        self.n_sources = self.counts.size
        self.n_rows = self.rows.shape[0]
        self.grand_mean = self.rows.mean(axis=0)
        self.p = self.rows.shape[1]
        # row blocks grouped by replicate count for vectorized BT draws
        self.count_groups = {}
        for c in np.unique(self.counts):
            self.count_groups[int(c)] = np.flatnonzero(self.counts == c)
        self.source_sums = np.vstack(
            [self.rows[self.idx == i].sum(axis=0) for i in range(self.n_sources)]
        )


def _draw_from_precision(mean, prec_chol, rng):
    p = mean.shape[0]
    z = rng.standard_normal(p)
    return mean + np.linalg.solve(prec_chol.T, z)


def mu_s_conditional(data, prior, aat):
    """Gaussian parameters (mean, precision) for the specific-mean update."""
    aat_inv = np.linalg.inv(aat)
    sb_inv = np.linalg.inv(prior.Sigma_b)
    prec = data.m * aat_inv + sb_inv
    lvec = data.m * aat_inv @ data.ybar_s + sb_inv @ prior.mu_pi
    return np.linalg.solve(prec, lvec), prec


def aat_conditional(data, prior, mu_s):
    """Inverse-Wishart (scale, df) for the specific within covariance."""
    dev = data.y_s - mu_s
    return dev.T @ dev + prior.Sigma_e, prior.nu_e + data.m


def mu_a_conditional(data, prior, bbt, cct):
    """Gaussian parameters (mean, precision) for the alternative-mean update."""
    tot_inv = np.linalg.inv(bbt + cct)
    ksb_inv = np.linalg.inv(prior.k * prior.Sigma_b)
    prec = data.n_rows * tot_inv + ksb_inv
    rvec = data.n_rows * tot_inv @ data.grand_mean + ksb_inv @ prior.mu_pi
    return np.linalg.solve(prec, rvec), prec


def cv_conditional(bbt, cct):
    """(mean map, covariance) of a within effect given its observation.

    The conditional mean is W (y - mu_a) with W = CC'(BB'+CC')^-1 and the
    covariance is (BB'^-1 + CC'^-1)^-1, the precision-weighted combination.
    """
    total = bbt + cct
    w = cct @ np.linalg.inv(total)
    cov = cct - w @ cct  # equals (BB'^-1 + CC'^-1)^-1
    return w, 0.5 * (cov + cov.T)


def bbt_conditional(data, prior, mu_a, cv):
    """Inverse-Wishart (scale, df) for the between covariance given within effects."""
    dev = data.rows - mu_a - cv
    return dev.T @ dev + prior.Sigma_b, prior.nu_b + data.n_rows


def bt_conditional(bbt, cct, resid_sum, m_i):
    """(mean, covariance) of one source's between effect given its residual sum."""
    prec = np.linalg.inv(bbt) + m_i * np.linalg.inv(cct)
    cov = np.linalg.inv(prec)
    mean = cov @ np.linalg.solve(cct, resid_sum)
    return mean, 0.5 * (cov + cov.T)


def cct_conditional(data, prior, mu_a, bt):
    """Inverse-Wishart (scale, df) for the within covariance given between effects."""
    dev = data.rows - mu_a - bt[data.idx]
    return dev.T @ dev + prior.Sigma_e, prior.nu_e + data.n_rows


def _draw_cv(data, mu_a, bbt, cct, rng, z_cv=None):
    """All within effects from their per-observation conditionals."""
    d = data.rows - mu_a
    w, cov_cv = cv_conditional(bbt, cct)
    chol_cv = chol_factor(cov_cv)
    if z_cv is None:
        z_cv = rng.standard_normal(d.shape)
    return d @ w.T + z_cv @ chol_cv.T


def _draw_bt(data, mu_a, bbt, cct, rng, z_bt=None):
    """All between effects from their per-source conditionals.

    Sources sharing a replicate count share one covariance; each source
    consumes its own standard-normal row, so draws permute with the sources.
    """
    if z_bt is None:
        z_bt = rng.standard_normal((data.n_sources, data.p))
    bt = np.empty((data.n_sources, data.p))
    resid_sums = data.source_sums - data.counts[:, None] * mu_a
    for m_i, group in data.count_groups.items():
        _, cov = bt_conditional(bbt, cct, np.zeros(data.p), m_i)
        chol_bt = chol_factor(cov)
        means = np.linalg.solve(cct, resid_sums[group].T).T @ cov.T
        bt[group] = means + z_bt[group] @ chol_bt.T
    return bt


def latent_conditionals(state, data, rng=None, z_bt=None, z_cv=None):
    """Draw (between effects, within effects) from their full conditionals
    at the current parameter values.  ``z_cv`` ((N+m_u, p)) and ``z_bt``
    ((n+1, p)) inject standard normals for tests."""
    cv = _draw_cv(data, state.mu_a, state.bbt, state.cct, rng, z_cv=z_cv)
    bt = _draw_bt(data, state.mu_a, state.bbt, state.cct, rng, z_bt=z_bt)
    return bt, cv


def gibbs_step(state, data, prior, rng):
    """One full sweep of the seven conditional updates, in their fixed order:
    mu_s, AA', mu_a, within effects, BB', between effects, CC'."""
    mean, prec = mu_s_conditional(data, prior, state.aat)
    mu_s = _draw_from_precision(mean, chol_factor(prec), rng)

    scale, df = aat_conditional(data, prior, mu_s)
    aat = sample_inv_wishart(scale, df, rng)

    mean, prec = mu_a_conditional(data, prior, state.bbt, state.cct)
    mu_a = _draw_from_precision(mean, chol_factor(prec), rng)

    cv = _draw_cv(data, mu_a, state.bbt, state.cct, rng)

    scale, df = bbt_conditional(data, prior, mu_a, cv)
    bbt = sample_inv_wishart(scale, df, rng)

    bt = _draw_bt(data, mu_a, bbt, state.cct, rng)

    scale, df = cct_conditional(data, prior, mu_a, bt)
    cct = sample_inv_wishart(scale, df, rng)

    return GibbsState(mu_s, aat, mu_a, bbt, cct, bt, cv)


def new_source_marginal_chol(bbt, cct, m_u):
    """Lower Cholesky of J kron BB' + I kron CC' for one new source."""
    p = bbt.shape[0]
    cov = np.kron(np.ones((m_u, m_u)), bbt) + np.kron(np.eye(m_u), cct)
    return chol_factor(0.5 * (cov + cov.T)), p


def log_ratio_fs_fa(state, data):
    """log f_s(y_u | theta_s) - log f_a(y_u | theta_a) at the current state."""
    chol_s = chol_factor(state.aat)
    log_fs = float(np.sum(mvn_logpdf_chol(data.y_u, state.mu_s, chol_s)))
    chol_a, _ = new_source_marginal_chol(state.bbt, state.cct, data.m_u)
    vec = (data.y_u - state.mu_a).ravel()
    log_fa = float(mvn_logpdf_chol(vec, np.zeros(vec.size), chol_a))
    return log_fs - log_fa


def log10_mean_ratio(log_ratios):
    """(log10 of the average ratio, log10-scale MC standard error)."""
    log_mean, se = log_mean_and_se(np.asarray(log_ratios, float))
    return log_mean / LN10, se / LN10


def gibbs_init(case, data, prior, rng):
    """Data-driven starting state: moment estimates with jitter fallbacks."""
    p = data.p
    try:
        dev = data.y_s - data.ybar_s
        aat0 = dev.T @ dev / max(data.m - 1, 1)
        chol_with_jitter(aat0)
    except NotPositiveDefinite:
        aat0 = prior.Sigma_e / max(prior.nu_e - p - 1, 1.0)
    aat0 = aat0 + 1e-10 * np.trace(aat0) / p * np.eye(p) if np.trace(aat0) > 0 else prior.Sigma_e
    means = np.array([data.rows[data.idx == i].mean(axis=0) for i in range(data.n_sources)])
    bdev = means - data.grand_mean
    bbt0 = bdev.T @ bdev / max(data.n_sources - 1, 1)
    wdev = data.rows - means[data.idx]
    cct0 = wdev.T @ wdev / max(data.n_rows - 1, 1)
    try:
        chol_factor(bbt0)
    except NotPositiveDefinite:
        bbt0 = prior.Sigma_b / max(prior.nu_b - p - 1, 1.0)
    try:
        chol_factor(cct0)
    except NotPositiveDefinite:
        cct0 = prior.Sigma_e / max(prior.nu_e - p - 1, 1.0)
    state = GibbsState(
        mu_s=data.ybar_s.copy(),
        aat=aat0,
        mu_a=data.grand_mean.copy(),
        bbt=bbt0,
        cct=cct0,
        bt=np.zeros((data.n_sources, p)),
        cv=np.zeros((data.n_rows, p)),
    )
    return state


@dataclass(frozen=True)
class BfResult:
    """Bayes factor record in the same shape as the other engines' results."""

    log10_bf: float
    mc_se: float
    n_sweeps: int
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": "bf",
            "log10_bf": self.log10_bf,
            "mc_se": self.mc_se,
            "n_sweeps": self.n_sweeps,
            "meta": dict(self.meta),
        }


def compute_bf(case, prior, config=None):
    """Run the defense-posterior Gibbs sampler and average the likelihood ratio.

    The unknown rows join the background data as source n+1 for the whole
    chain; the reported value is the log10 of the posterior-mean ratio
    f_s(y_u)/f_a(y_u) over post burn-in sweeps.
    """
    from ._chain_kernels import gibbs_bf_kernel
    from .gf_specific import _kernel_seed

    config = config or ChainConfig(n_iter=20_000, burn_in=5_000)
    config.validate()
    data = BfCaseData(case)
    rng = np.random.default_rng(config.seed)
    try:
        state = gibbs_init(case, data, prior, rng)
        log_ratio_fs_fa(state, data)
    except NotPositiveDefinite as exc:
        raise ChainInitializationFailed(f"degenerate starting state: {exc}") from exc
    log_ratios, status = gibbs_bf_kernel(
        data.y_s,
        data.rows,
        data.idx.astype(np.int64),
        data.counts.astype(np.int64),
        data.source_sums,
        data.y_u,
        prior.mu_pi,
        prior.Sigma_b,
        prior.Sigma_e,
        float(prior.nu_b),
        float(prior.nu_e),
        float(prior.k),
        state.mu_s,
        state.aat,
        state.mu_a,
        state.bbt,
        state.cct,
        config.n_iter,
        config.burn_in,
        _kernel_seed(config.seed),
    )
    if status == 1:
        raise ChainInitializationFailed("prior covariance is not positive definite")
    if status != 0:
        raise NotPositiveDefinite("Gibbs sweep hit a numerically degenerate conditional")
    log10_bf, mc_se = log10_mean_ratio(log_ratios)
    return BfResult(
        log10_bf=log10_bf,
        mc_se=mc_se,
        n_sweeps=config.n_iter,
        meta={
            "burn_in": config.burn_in,
            "seed": config.seed,
            "prior": prior.to_dict(),
        },
    )
