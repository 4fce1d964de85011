"""Independent numerical oracles shared by module tests and the acceptance suite.

Everything here is written from raw sums and library quadrature only: no
calls into the package's density or engine code paths, so agreement is a
two-route check.
"""

import numpy as np
from scipy import stats

LN10 = np.log(10.0)


def gff_quadrature_p1(
    y_s,
    y_u,
    data_alt,
    t_hats,
    tau=5.0,
    n_mu=241,
    n_scale=141,
    n_t=800,
):
    """Nested-quadrature generalized fiducial factor for p = 1.

    Numerator: 2-D trapezoid over (mu, log a) of the specific predictive
    against the unnormalized fiducial density, normalized by the same grid.
    Denominator: 3-D trapezoid over (mu, log b, log c) with the between
    effect integrated by quantile-midpoint averaging over T_tau.
    Returns (log numerator, log denominator); constants common to both
    integrals of a ratio cancel and are dropped.
    """
    y_s = np.asarray(y_s, float).ravel()
    y_u = np.asarray(y_u, float).ravel()
    m = y_s.size
    ybar, s0 = y_s.mean(), float(np.sum((y_s - y_s.mean()) ** 2))

    # --- numerator ------------------------------------------------------
    mu_sd = np.sqrt(s0 / m) / np.sqrt(max(m - 2, 1))
    mu_grid = np.linspace(ybar - 45 * mu_sd, ybar + 45 * mu_sd, 4 * n_mu + 1)
    la_grid = np.linspace(np.log(np.sqrt(s0 / m)) - 5.0, np.log(np.sqrt(s0 / m)) + 5.0, 2 * n_scale)
    a = np.exp(la_grid)
    ssq = s0 + m * (ybar - mu_grid) ** 2
    # log q_s up to (mu, a)-free constants, plus the d a = a d(log a) weight
    log_q = -(m + 1.0) * np.log(a)[None, :] - ssq[:, None] / (2 * a[None, :] ** 2) + np.log(a)[None, :]
    log_f = np.zeros_like(log_q)
    for y in y_u:
        log_f = log_f - np.log(a)[None, :] - (y - mu_grid[:, None]) ** 2 / (2 * a[None, :] ** 2)
    log_f -= 0.5 * y_u.size * np.log(2 * np.pi)
    w = np.log(_trap_weights(mu_grid))[:, None] + np.log(_trap_weights(la_grid))[None, :]
    base = log_q + w
    log_num = _lse(base + log_f) - _lse(base)

    # --- denominator ----------------------------------------------------
    rows, idx = data_alt.stacked()
    y = rows[:, 0]
    t = np.asarray(t_hats, float).ravel()[idx]
    big_n = y.size
    s_t, s_tt = np.sum(t), np.sum(t * t)
    s_y, s_yy, s_ty = np.sum(y), np.sum(y * y), np.sum(t * y)

    mu0 = y.mean()
    within = np.concatenate([s.rows[:, 0] - s.rows[:, 0].mean() for s in data_alt.sources])
    c0 = max(np.std(within), 1e-3)
    means = np.array([s.rows[:, 0].mean() for s in data_alt.sources])
    b0 = max(np.std(means), 1e-3)
    mu_g = np.linspace(mu0 - 12 * (b0 + c0) / np.sqrt(data_alt.n), mu0 + 12 * (b0 + c0) / np.sqrt(data_alt.n), n_mu)
    lb_g = np.linspace(np.log(b0) - 4.5, np.log(b0) + 3.0, n_scale)
    lc_g = np.linspace(np.log(c0) - 3.0, np.log(c0) + 3.0, n_scale)
    b_g, c_g = np.exp(lb_g), np.exp(lc_g)

    mu3 = mu_g[:, None, None]
    b3 = b_g[None, :, None]
    c3 = c_g[None, None, :]
    qsum = s_y - big_n * mu3 - b3 * s_t
    wq = s_ty - s_t * mu3 - s_tt * b3
    s_a = (
        s_yy - 2 * mu3 * s_y + big_n * mu3**2 - 2 * b3 * s_ty + 2 * mu3 * b3 * s_t + b3**2 * s_tt
    )
    det = (
        big_n * (s_tt * s_a - wq**2)
        - s_t * (s_t * s_a - wq * qsum)
        + qsum * (s_t * wq - s_tt * qsum)
    )
    with np.errstate(divide="ignore"):
        log_det = np.where(det > 0, np.log(np.maximum(det, 1e-300)), -np.inf)
    log_qa = (
        -0.5 * (big_n + 1) * np.log(c3**2)
        - s_a / (2 * c3**2)
        + 0.5 * log_det
        + np.log(b3)
        + np.log(c3)
    )
    w3 = (
        np.log(_trap_weights(mu_g))[:, None, None]
        + np.log(_trap_weights(lb_g))[None, :, None]
        + np.log(_trap_weights(lc_g))[None, None, :]
    )

    # E over the between effect by quantile midpoints of T_tau; the
    # within-variance factor c^-m_u is common to all nodes and applied once.
    probs = (np.arange(n_t) + 0.5) / n_t
    t_nodes = stats.t.ppf(probs, df=tau)
    inv_2c2 = 1.0 / (2 * c_g**2)
    acc = np.zeros_like(log_qa)
    for tk in t_nodes:
        center = mu_g[:, None] + b_g[None, :] * tk  # (n_mu, n_b)
        sse = np.zeros_like(center)
        for yv in y_u:
            sse += (yv - center) ** 2
        acc += np.exp(-sse[:, :, None] * inv_2c2[None, None, :])
    with np.errstate(divide="ignore"):
        log_ef = (
            np.log(acc / n_t)
            - y_u.size * np.log(c3)
            - 0.5 * y_u.size * np.log(2 * np.pi)
        )

    base3 = log_qa + w3
    log_den = _lse(base3 + log_ef) - _lse(base3)
    return float(log_num), float(log_den)


def bf_grid_p1(case, prior, n_mu=201, n_var=181):
    """Grid-integrated Bayes factor for p = 1 micro cases.

    Numerator: specific posterior predictive of the unknown rows under the
    normal prior on mu_s and inverse-gamma-shaped inverse-Wishart prior on
    the within variance.  Denominator: alternative posterior predictive of
    the unknown rows as one new source with an exchangeable covariance.
    Returns log10 BF.
    """
    y_s = case.specific.rows[:, 0]
    y_u = case.unknown.rows[:, 0]
    mu_pi = float(np.asarray(prior.mu_pi).ravel()[0])
    sb = float(np.asarray(prior.Sigma_b).ravel()[0])
    se = float(np.asarray(prior.Sigma_e).ravel()[0])
    nu_b, nu_e, k = float(prior.nu_b), float(prior.nu_e), float(prior.k)

    def log_iw1(v, scale, df):
        # density of the 1-D inverse Wishart (inverse gamma) up to constants
        return -(df + 2.0) / 2.0 * np.log(v) - scale / (2.0 * v)

    # ---- numerator: integral over (mu_s, va) --------------------------
    m = y_s.size
    loc = (y_s.sum() / m + mu_pi) / 2
    spread = 3 * (np.std(y_s) + np.sqrt(sb) + np.sqrt(se / max(nu_e - 2, 1)) + abs(y_s.mean() - mu_pi))
    mu_grid = np.linspace(loc - spread, loc + spread, n_mu)
    lv_grid = np.linspace(np.log(se / (nu_e + 2)) - 6, np.log(se / max(nu_e - 2, 1)) + 6, n_var)
    va = np.exp(lv_grid)

    dev = y_s[:, None, None] - mu_grid[None, :, None]
    loglik = np.sum(-0.5 * np.log(2 * np.pi * va[None, None, :]) - dev**2 / (2 * va[None, None, :]), axis=0)
    log_post = (
        loglik
        + (-0.5 * np.log(2 * np.pi * sb) - (mu_grid[:, None] - mu_pi) ** 2 / (2 * sb))
        + log_iw1(va[None, :], se, nu_e)
        + np.log(va[None, :])  # dv = v dlog v
    )
    wgt = np.log(_trap_weights(mu_grid))[:, None] + np.log(_trap_weights(lv_grid))[None, :]
    pred = np.sum(
        -0.5 * np.log(2 * np.pi * va[None, None, :])
        - (y_u[:, None, None] - mu_grid[None, :, None]) ** 2 / (2 * va[None, None, :]),
        axis=0,
    )
    log_num = _lse(log_post + wgt + pred) - _lse(log_post + wgt)

    # ---- denominator: integral over (mu_a, vb, vc) --------------------
    panels = case.alternative.sources
    n_mu_a = n_mu
    means = np.array([s.rows[:, 0].mean() for s in panels])
    within = np.concatenate([s.rows[:, 0] - s.rows[:, 0].mean() for s in panels])
    b0 = max(np.std(means), 1e-2)
    c0 = max(np.std(within), 1e-2)
    mu_g = np.linspace(means.mean() - 8 * (b0 + c0), means.mean() + 8 * (b0 + c0), n_mu_a)
    lvb = np.linspace(np.log(sb / (nu_b + 2)) - 6, max(np.log(b0**2), np.log(sb)) + 4, n_var)
    lvc = np.linspace(np.log(se / (nu_e + 2)) - 6, max(np.log(c0**2), np.log(se / max(nu_e - 2, 1))) + 4, n_var)
    vb, vc = np.exp(lvb), np.exp(lvc)

    mu3 = mu_g[:, None, None]
    vb3 = vb[None, :, None]
    vc3 = vc[None, None, :]
    loglik = np.zeros((n_mu_a, n_var, n_var))
    for s in panels:
        loglik += _exchangeable_loglik(s.rows[:, 0], mu3, vb3, vc3)
    log_post = (
        loglik
        + (-0.5 * np.log(2 * np.pi * k * sb) - (mu3 - mu_pi) ** 2 / (2 * k * sb))
        + log_iw1(vb3, sb, nu_b)
        + log_iw1(vc3, se, nu_e)
        + np.log(vb3)
        + np.log(vc3)
    )
    wgt = (
        np.log(_trap_weights(mu_g))[:, None, None]
        + np.log(_trap_weights(lvb))[None, :, None]
        + np.log(_trap_weights(lvc))[None, None, :]
    )
    pred = _exchangeable_loglik(y_u, mu3, vb3, vc3)
    log_den = _lse(log_post + wgt + pred) - _lse(log_post + wgt)
    return (log_num - log_den) / LN10


def _exchangeable_loglik(y, mu, vb, vc):
    """Log N(y; mu 1, vb J + vc I) for scalar-per-cell grids.

    Uses the rank-one identities: det = vc^(m-1) (vc + m vb) and the
    quadratic form splits into within-deviations over vc and the mean
    against vb + vc/m.
    """
    y = np.asarray(y, float).ravel()
    m = y.size
    ybar = y.mean()
    ss_w = float(np.sum((y - ybar) ** 2))
    logdet = (m - 1) * np.log(vc) + np.log(vc + m * vb)
    quad = ss_w / vc + m * (ybar - mu) ** 2 / (vc + m * vb)
    return -0.5 * (m * np.log(2 * np.pi) + logdet + quad)


def _trap_weights(grid):
    w = np.empty_like(grid)
    w[1:-1] = (grid[2:] - grid[:-2]) / 2
    w[0] = (grid[1] - grid[0]) / 2
    w[-1] = (grid[-1] - grid[-2]) / 2
    return w


def _lse(arr):
    arr = np.asarray(arr, float)
    hi = arr.max()
    if not np.isfinite(hi):
        return -np.inf
    return float(hi + np.log(np.sum(np.exp(arr - hi))))
