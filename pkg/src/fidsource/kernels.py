"""Deterministic numerical kernels used by every other module.

Densities are evaluated wholly in the natural-log domain; log10 conversion
happens only at reporting interfaces.  Matrix arguments named ``cov`` or
``scale`` must be symmetric positive-definite; factors named ``chol`` are
lower-triangular with positive diagonal.  All samplers draw from an explicit
``numpy.random.Generator`` and are bit-reproducible for a fixed seed and call
order.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln
from scipy.special import logsumexp as _scipy_logsumexp

from .errors import (
    EmptyInput,
    InvalidDegreesOfFreedom,
    LengthMismatch,
    NotPositiveDefinite,
)

LOG_2PI = np.log(2.0 * np.pi)

# Relative symmetry tolerance for matrices accepted as symmetric.
SYM_RTOL = 1e-12

# One-shot diagonal jitter applied to near-singular sample covariances,
# as a fraction of the mean diagonal scale.
JITTER_REL = 1e-10


def check_symmetric(s, name="matrix"):
    """Validate (and return) a square symmetric matrix."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise NotPositiveDefinite(f"{name} must be square, got shape {s.shape}")
    scale = np.max(np.abs(s)) or 1.0
    if np.max(np.abs(s - s.T)) > SYM_RTOL * max(scale, 1.0) * s.shape[0]:
        raise NotPositiveDefinite(f"{name} is not symmetric")
    return s


def chol_factor(s):
    """Lower-triangular Cholesky factor L with L @ L.T == s.

    Raises
    ------
    NotPositiveDefinite
        If ``s`` is asymmetric or any pivot is <= 0.  Callers holding a
        near-singular sample covariance should fall back to
        :func:`chol_with_jitter`.
    """
    s = check_symmetric(s)
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def chol_with_jitter(s):
    """Cholesky with the one-shot jitter policy for degenerate scatters.

    Adds ``JITTER_REL * trace(s)/p`` to the diagonal once if plain
    factorization fails; a second failure propagates ``NotPositiveDefinite``.
    """
    try:
        return chol_factor(s)
    except NotPositiveDefinite:
        s = np.asarray(s, dtype=float)
        p = s.shape[0]
        bump = JITTER_REL * (np.trace(s) / p if np.trace(s) > 0 else 1.0)
        return chol_factor(s + bump * np.eye(p))


def _solve_chol_lower(chol, rhs):
    """Solve L x = rhs for lower-triangular L (rhs may be a matrix)."""
    return solve_triangular(chol, rhs, lower=True, check_finite=False)


def mvn_logpdf_chol(x, mean, chol):
    """log N_p(x; mean, L L') given the lower Cholesky factor L.

    ``x`` may be a single p-vector or an (n, p) array of rows; the return is
    a scalar or length-n array correspondingly.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    single = x.ndim == 1
    dev = np.atleast_2d(x) - mean
    p = dev.shape[1]
    z = _solve_chol_lower(chol, dev.T)
    maha = np.einsum("ij,ij->j", z, z)
    half_logdet = np.sum(np.log(np.diag(chol)))
    out = -0.5 * (p * LOG_2PI + maha) - half_logdet
    return float(out[0]) if single else out


def mvn_logpdf(x, mean, cov):
    """Multivariate Gaussian log density, log-domain throughout."""
    return mvn_logpdf_chol(x, mean, chol_factor(cov))


def mvt_logpdf(x, mean, scale, df):
    """Multivariate Student-T log density with location/scale parameterization.

    ``scale`` is the positive-definite scale matrix (covariance times
    (df-2)/df when df > 2), ``df`` the degrees of freedom.
    """
    if df <= 0:
        raise InvalidDegreesOfFreedom(f"df must be > 0, got {df}")
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    chol = chol_factor(scale)
    single = x.ndim == 1
    dev = np.atleast_2d(x) - mean
    p = dev.shape[1]
    z = _solve_chol_lower(chol, dev.T)
    maha = np.einsum("ij,ij->j", z, z)
    half_logdet = np.sum(np.log(np.diag(chol)))
    out = (
        gammaln(0.5 * (df + p))
        - gammaln(0.5 * df)
        - 0.5 * p * np.log(df * np.pi)
        - half_logdet
        - 0.5 * (df + p) * np.log1p(maha / df)
    )
    return float(out[0]) if single else out


def sample_mvn(mean, cov, rng, size=None):
    """Draw from N_p(mean, cov); shape (p,) or (size, p)."""
    return sample_mvn_chol(mean, chol_factor(cov), rng, size=size)


def sample_mvn_chol(mean, chol, rng, size=None):
    """Draw from N_p(mean, L L') given the lower Cholesky factor."""
    mean = np.asarray(mean, dtype=float)
    p = mean.shape[0]
    if size is None:
        return mean + chol @ rng.standard_normal(p)
    z = rng.standard_normal((size, p))
    return mean + z @ chol.T


def sample_mvt(mean, scale, df, rng, size=None):
    """Draw from the multivariate T_df(mean, scale).

    Uses the normal/chi-square mixture: z drawn first, then the chi-square
    mixing variate, so the draw order is part of the reproducibility
    contract.
    """
    if df <= 0:
        raise InvalidDegreesOfFreedom(f"df must be > 0, got {df}")
    mean = np.asarray(mean, dtype=float)
    chol = chol_factor(scale)
    p = mean.shape[0]
    if size is None:
        z = rng.standard_normal(p)
        g = rng.chisquare(df)
        return mean + (chol @ z) / np.sqrt(g / df)
    z = rng.standard_normal((size, p))
    g = rng.chisquare(df, size=size)
    return mean + (z @ chol.T) / np.sqrt(g / df)[:, None]


def sample_inv_wishart(scale, df, rng):
    """Draw X ~ inv-Wishart_p(scale, df), density ∝ |X|^-(df+p+1)/2 exp(-tr(scale X^-1)/2).

    ``df`` must exceed p - 1 for a proper distribution; the mean
    scale/(df - p - 1) exists for df > p + 1.  Uses the Bartlett
    decomposition of the inverse Wishart draw: chi-square diagonal first,
    then the strict lower triangle of normals.
    """
    scale = check_symmetric(scale, "scale")
    p = scale.shape[0]
    if df <= p - 1:
        raise InvalidDegreesOfFreedom(f"inverse-Wishart df must be > p-1 = {p - 1}, got {df}")
    chi2 = rng.chisquare(df - np.arange(p))
    bart = np.zeros((p, p))
    bart[np.diag_indices(p)] = np.sqrt(chi2)
    bart[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    # W = (F A)(F A)' ~ Wishart(df, scale^-1) for any F with F F' = scale^-1;
    # here F = L^-T from scale = L L'.  The draw is X = W^-1.
    scale_chol = chol_factor(scale)
    f = solve_triangular(scale_chol, np.eye(p), lower=True, check_finite=False).T
    m = f @ bart
    x = np.linalg.inv(m @ m.T)
    return 0.5 * (x + x.T)


def logsumexp(values):
    """log(sum(exp(values))), stable down to values around -1e4."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptyInput("logsumexp of an empty sequence")
    return float(_scipy_logsumexp(values))


def pav_fit(scores, labels):
    """Isotonic (pool-adjacent-violators) regression of labels on score order.

    Returns the least-squares monotone-in-score fit, one value per input in
    the original order.  Tied scores are pooled before the PAV pass so the
    fit is a function of the score value.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise LengthMismatch(
            f"scores and labels must be equal-length 1-D, got {scores.shape} vs {labels.shape}"
        )
    if scores.size == 0:
        raise EmptyInput("pav_fit of empty input")
    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = labels[order]

    # Pool exact score ties into single weighted blocks.
    boundaries = np.flatnonzero(np.diff(s_sorted) != 0) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [s_sorted.size]))

    means = []
    weights = []
    sizes = []
    for a, b in zip(starts, ends):
        means.append(y_sorted[a:b].mean())
        weights.append(float(b - a))
        sizes.append(b - a)

    # Stack-based PAVA on the tied blocks.
    stack = []  # (mean, weight, n_blocks)
    for mean, wt, size in zip(means, weights, sizes):
        stack.append([mean, wt, size])
        while len(stack) > 1 and stack[-2][0] > stack[-1][0] - 1e-15:
            m2, w2, c2 = stack.pop()
            m1, w1, c1 = stack.pop()
            stack.append([(m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, c1 + c2])

    fitted_sorted = np.empty_like(y_sorted)
    pos = 0
    for mean, _wt, count in stack:
        fitted_sorted[pos : pos + count] = mean
        pos += count

    fitted = np.empty_like(fitted_sorted)
    fitted[order] = fitted_sorted
    return np.clip(fitted, 0.0, 1.0)
