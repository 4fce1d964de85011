"""Frequentist likelihood ratio from pooled-versus-separate maximum likelihood.

The specific-source MLE is closed form (mean, scatter/m).  The
alternative-source model is the Gaussian random-effects marginal, fit by EM
over (mu, between covariance, within covariance).  The ratio pools the
unknown rows with each side in turn: six likelihood factors, any fit
failure marks the trial failed rather than aborting a batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import AlternativeDataset, MeasurementPanel
from .errors import DegenerateSample, InsufficientReplication, NotPositiveDefinite
from .gff import LN10
from .kernels import chol_factor, mvn_logpdf_chol

# Relative eigenvalue floor under which a sample scatter counts as singular.
DEGENERATE_REL_EIG = 1e-10

EM_TOL = 1e-8
# Geometric EM convergence on the in-scope population sizes needs roughly
# 250-1500 sweeps to push the gain under EM_TOL; the cap only exists to
# bound pathological fits.
EM_MAX_ITER = 4000


@dataclass(frozen=True)
class GaussianAltParams:
    """Gaussian-effect alternative model in covariance form."""

    mu_a: np.ndarray
    bbt: np.ndarray  # between-source covariance, PSD
    cct: np.ndarray  # within-source covariance, PD


@dataclass(frozen=True)
class MleFit:
    """A maximum-likelihood fit with its optimum value and convergence record."""

    params: object
    log_lik: float
    converged: bool
    iterations: int
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class SpecificMleParams:
    """Specific-source MLE in covariance form (scatter/m divisor)."""

    mu_s: np.ndarray
    aat: np.ndarray


def mle_specific(panel):
    """Closed-form Gaussian MLE of one panel: mean and scatter/m.

    Raises DegenerateSample when the scatter is numerically singular
    (relative eigenvalue floor), mirroring how near-identical fragments
    crash a likelihood-ratio trial.
    """
    rows = panel.rows if isinstance(panel, MeasurementPanel) else np.atleast_2d(panel)
    m, _p = rows.shape
    if m < 2:
        raise InsufficientReplication(f"need m >= 2 rows, got {m}")
    mu = rows.mean(axis=0)
    dev = rows - mu
    aat = dev.T @ dev / m
    evals = np.linalg.eigvalsh(0.5 * (aat + aat.T))
    if evals[-1] <= 0 or evals[0] <= DEGENERATE_REL_EIG * evals[-1]:
        raise DegenerateSample(
            f"sample scatter is singular (eigenvalues {evals.tolist()})"
        )
    try:
        chol = chol_factor(aat)
    except NotPositiveDefinite as exc:
        raise DegenerateSample(str(exc)) from exc
    log_lik = float(np.sum(mvn_logpdf_chol(rows, mu, chol)))
    return MleFit(params=SpecificMleParams(mu, aat), log_lik=log_lik, converged=True, iterations=0)


def specific_loglik(rows, fit_params):
    rows = np.atleast_2d(rows)
    if rows.shape[0] == 0:
        return 0.0
    return float(np.sum(mvn_logpdf_chol(rows, fit_params.mu_s, chol_factor(fit_params.aat))))


def new_source_loglik(rows, params):
    """Log marginal of one new source's rows: N(vec; 1 kron mu, J kron BBt + I kron CCt)."""
    rows = np.atleast_2d(rows)
    m = rows.shape[0]
    if m == 0:
        return 0.0
    cov = np.kron(np.ones((m, m)), params.bbt) + np.kron(np.eye(m), params.cct)
    chol = chol_factor(0.5 * (cov + cov.T))
    vec = (rows - params.mu_a).ravel()
    return float(mvn_logpdf_chol(vec, np.zeros(vec.size), chol))


def alt_marginal_loglik(data, mu_a, bbt, cct):
    """Sum over sources of the Gaussian random-effects marginal log density."""
    params = GaussianAltParams(np.asarray(mu_a, float), np.asarray(bbt, float), np.asarray(cct, float))
    counts = data.counts
    total = 0.0
    for m in np.unique(counts):
        cov = np.kron(np.ones((m, m)), params.bbt) + np.kron(np.eye(m), params.cct)
        chol = chol_factor(0.5 * (cov + cov.T))
        group = [s for s, c in zip(data.sources, counts) if c == m]
        vecs = np.vstack([(s.rows - params.mu_a).ravel() for s in group])
        total += float(np.sum(mvn_logpdf_chol(vecs, np.zeros(vecs.shape[1]), chol)))
    return total


def _psd_project(mat):
    evals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    evals = np.maximum(evals, 0.0)
    return (vecs * evals) @ vecs.T


def mle_alternative(data, tol=EM_TOL, max_iter=EM_MAX_ITER):
    """EM fit of the Gaussian random-effects model.

    E-step: conditional mean and covariance of each source's effect given
    its rows.  M-step: closed-form updates of (mu, between, within).  Stops
    when the marginal log likelihood gains less than ``tol`` or at
    ``max_iter``; a non-converged fit is returned with converged=False, not
    raised.
    """
    n = data.n
    if n < 2:
        raise InsufficientReplication(f"need n >= 2 sources, got {n}")
    rows, idx = data.stacked()
    counts = data.counts
    total = data.total
    p = data.dim
    means = np.vstack([s.mean for s in data.sources])

    mu = rows.mean(axis=0)
    bdev = means - mu
    psi = _psd_project(bdev.T @ bdev / max(n - 1, 1))
    wdev = rows - means[idx]
    sigma = wdev.T @ wdev / max(total - 1, 1)
    if np.trace(sigma) <= 0:
        sigma = np.eye(p)
    try:
        chol_factor(sigma)
    except NotPositiveDefinite:
        sigma = sigma + (1e-8 * max(np.trace(sigma), 1.0) / p) * np.eye(p)

    history = []
    prev = -np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # E-step: b_i | y ~ N(Psi (Psi + Sigma/m_i)^-1 (ybar_i - mu), Psi - Psi(...)^-1 Psi)
        b_hat = np.empty((n, p))
        u_sum_by_count = {}
        u_by_source = np.empty((n, p, p))
        for m in np.unique(counts):
            gate = np.flatnonzero(counts == m)
            mix = psi + sigma / m
            gain = np.linalg.solve(mix.T, psi.T).T  # Psi mix^-1
            u_cov = psi - gain @ psi
            u_by_source[gate] = u_cov
            b_hat[gate] = (means[gate] - mu) @ gain.T
            u_sum_by_count[m] = (u_cov, gate.size)

        # M-step
        mu = (rows - b_hat[idx]).mean(axis=0)
        psi = _psd_project((b_hat.T @ b_hat + u_by_source.sum(axis=0)) / n)
        resid = rows - mu - b_hat[idx]
        sigma = (resid.T @ resid + (counts[:, None, None] * u_by_source).sum(axis=0)) / total
        sigma = 0.5 * (sigma + sigma.T)

        ll = alt_marginal_loglik(data, mu, psi, sigma)
        history.append(ll)
        if ll - prev < tol and it > 1:
            converged = True
            prev = ll
            break
        prev = ll

    return MleFit(
        params=GaussianAltParams(mu, _psd_project(psi), sigma),
        log_lik=float(prev),
        converged=converged,
        iterations=it,
        history=np.asarray(history),
    )


@dataclass(frozen=True)
class LrResult:
    """Likelihood ratio record; failed trials carry no value."""

    log10_lr: float | None
    failed: bool
    reason: str | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": "lr",
            "log10_lr": self.log10_lr,
            "failed": self.failed,
            "reason": self.reason,
            "meta": dict(self.meta),
        }


def compute_lr_arrays(spec_rows, unknown_rows, alternative):
    """Six-factor likelihood ratio from raw arrays.

    ``unknown_rows`` may be empty (testing extension), in which case the
    pooled fits coincide with the plain fits and the ratio is exactly one.
    """
    spec_rows = np.atleast_2d(np.asarray(spec_rows, float))
    unknown_rows = np.asarray(unknown_rows, float).reshape(-1, spec_rows.shape[1])
    try:
        fit_s = mle_specific(spec_rows)
        pooled_rows = np.vstack([spec_rows, unknown_rows]) if unknown_rows.size else spec_rows
        fit_s_star = mle_specific(pooled_rows)
        fit_a = mle_alternative(alternative)
        if unknown_rows.size:
            pooled_alt = AlternativeDataset(
                tuple(alternative.sources) + (MeasurementPanel("unknown-pooled", unknown_rows),)
            )
        else:
            pooled_alt = alternative
        fit_a_star = mle_alternative(pooled_alt)
    except (DegenerateSample, NotPositiveDefinite) as exc:
        return LrResult(None, True, reason=f"{type(exc).__name__}: {exc}")
    if not (fit_a.converged and fit_a_star.converged):
        return LrResult(None, True, reason="NonConvergence: EM hit max iterations")

    log_num = (
        specific_loglik(unknown_rows, fit_s_star.params)
        + specific_loglik(spec_rows, fit_s_star.params)
        + fit_a.log_lik
    )
    log_den = (
        new_source_loglik(unknown_rows, fit_a_star.params)
        + specific_loglik(spec_rows, fit_s.params)
        + alt_marginal_loglik(alternative, fit_a_star.params.mu_a, fit_a_star.params.bbt, fit_a_star.params.cct)
    )
    return LrResult(
        log10_lr=(log_num - log_den) / LN10,
        failed=False,
        meta={
            "em_iterations": (fit_a.iterations, fit_a_star.iterations),
            "em_converged": (fit_a.converged, fit_a_star.converged),
        },
    )


def compute_lr(case):
    """Likelihood ratio for a case bundle; failures become per-trial records."""
    return compute_lr_arrays(case.specific.rows, case.unknown.rows, case.alternative)
