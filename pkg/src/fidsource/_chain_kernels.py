"""Numba-compiled inner loops for the two fiducial chains and the Gibbs sweep.

These kernels mirror the pure-numpy reference formulas in gf_specific,
gf_alternative, and bayes_factor exactly; the law-level tests (quadrature
and conjugacy oracles) exercise them through the public sampler entry
points.  Randomness comes from numba's MT19937 seeded per kernel call, so
chains are bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LOG_2PI = np.log(2.0 * np.pi)

ADAPT_OFFSET = 50.0
ADAPT_DECAY = 0.6


# ---------------------------------------------------------------------------
# small dense linear algebra (row-major, lower-triangular conventions)


@njit(cache=True)
def _chol(a, out):
    """Lower Cholesky of symmetric a into out; returns 0 on success."""
    p = a.shape[0]
    for i in range(p):
        for j in range(i + 1):
            s = a[i, j]
            for k in range(j):
                s -= out[i, k] * out[j, k]
            if i == j:
                if s <= 0.0 or not np.isfinite(s):
                    return 1
                out[i, i] = np.sqrt(s)
            else:
                out[i, j] = s / out[j, j]
        for j in range(i + 1, p):
            out[i, j] = 0.0
    return 0


@njit(cache=True)
def _inv_lower(ell, out):
    """Inverse of a lower-triangular matrix into out (also lower)."""
    p = ell.shape[0]
    for i in range(p):
        for j in range(p):
            out[i, j] = 0.0
    for i in range(p):
        out[i, i] = 1.0 / ell[i, i]
        for j in range(i):
            s = 0.0
            for k in range(j, i):
                s -= ell[i, k] * out[k, j]
            out[i, j] = s / ell[i, i]
    return out


@njit(cache=True)
def _sym_inv_from_chol(ell, work, out):
    """Inverse of L L' given lower L: out = L^-T L^-1."""
    p = ell.shape[0]
    _inv_lower(ell, work)
    for i in range(p):
        for j in range(p):
            s = 0.0
            for k in range(max(i, j), p):
                s += work[k, i] * work[k, j]
            out[i, j] = s
    return out


@njit(cache=True)
def _trace_sandwich(ell, s, y):
    """tr(S (L L')^-1) via two forward substitutions; y is a (p,p) buffer."""
    p = ell.shape[0]
    # solve L y = s (column-wise forward substitution)
    for col in range(p):
        for i in range(p):
            acc = s[i, col]
            for k in range(i):
                acc -= ell[i, k] * y[k, col]
            y[i, col] = acc / ell[i, i]
    # z = L^-1 y' ; trace of z accumulated without storing z fully
    tr = 0.0
    for col in range(p):
        # forward substitution for column col of y' (rows of y)
        # z[i] = (y[col, i] - sum_k ell[i,k] z[k]) / ell[i,i]; need z[col]
        zcol = np.empty(p)
        for i in range(col + 1):
            acc = y[col, i]
            for k in range(i):
                acc -= ell[i, k] * zcol[k]
            zcol[i] = acc / ell[i, i]
        tr += zcol[col]
    return tr


@njit(cache=True)
def _logdet_lu(a):
    """Log determinant of a small square matrix by LU with partial pivoting.

    Returns (sign, logabsdet); sign 0 flags an exactly singular pivot.
    """
    n = a.shape[0]
    lu = a.copy()
    sign = 1.0
    logdet = 0.0
    for col in range(n):
        piv = col
        big = abs(lu[col, col])
        for r in range(col + 1, n):
            if abs(lu[r, col]) > big:
                big = abs(lu[r, col])
                piv = r
        if big == 0.0:
            return 0.0, -np.inf
        if piv != col:
            for c in range(n):
                tmp = lu[col, c]
                lu[col, c] = lu[piv, c]
                lu[piv, c] = tmp
            sign = -sign
        d = lu[col, col]
        if d < 0:
            sign = -sign
        logdet += np.log(abs(d))
        for r in range(col + 1, n):
            f = lu[r, col] / d
            lu[r, col] = f
            for c in range(col + 1, n):
                lu[r, c] -= f * lu[col, c]
    return sign, logdet


@njit(cache=True)
def _unpack_factor(x, p, offset, a):
    """Fill lower-triangular a from (log-diagonal, sub-diagonal) coordinates."""
    for i in range(p):
        for j in range(p):
            a[i, j] = 0.0
    for i in range(p):
        a[i, i] = np.exp(x[offset + i])
    pos = offset + p
    for i in range(1, p):
        for j in range(i):
            a[i, j] = x[pos]
            pos += 1
    return a


# ---------------------------------------------------------------------------
# specific-source chain


@njit(cache=True)
def _spec_scatter(mu, ybar, s0, m, out):
    p = mu.shape[0]
    for i in range(p):
        for j in range(p):
            out[i, j] = s0[i, j] + m * (ybar[i] - mu[i]) * (ybar[j] - mu[j])
    return out


@njit(cache=True)
def _spec_logq(x, p, m, const, scatter, a, work):
    """log q + change-of-variables term, at unpacked state (scatter current)."""
    _unpack_factor(x, p, p, a)
    sum_log_diag = 0.0
    for i in range(p):
        sum_log_diag += x[p + i]
    tr = _trace_sandwich(a, scatter, work)
    val = const - (m + p) * sum_log_diag - 0.5 * tr + sum_log_diag
    if not np.isfinite(val):
        return -np.inf
    return val


@njit(cache=True)
def specific_chain_kernel(
    ybar, s0, const, m, x0, n_iter, burn_in, thin, target_accept, init_scale, seed, max_init
):
    """Componentwise adaptive RW chain for the specific-source target.

    Returns (draws, logq_transformed, accept_rates, scales, status); status
    1 means no finite starting state was found.
    """
    np.random.seed(seed)
    p = ybar.shape[0]
    d = x0.shape[0]
    a = np.zeros((p, p))
    work = np.zeros((p, p))
    scatter = np.zeros((p, p))
    scatter_prop = np.zeros((p, p))

    x = x0.copy()
    _spec_scatter(x[:p], ybar, s0, m, scatter)
    val = _spec_logq(x, p, m, const, scatter, a, work)
    attempt = 0
    while not np.isfinite(val):
        attempt += 1
        if attempt > max_init:
            return (
                np.zeros((0, d)),
                np.zeros(0),
                np.zeros(d),
                np.zeros(d),
                1,
            )
        for j in range(d):
            x[j] = x0[j] + init_scale * np.random.standard_normal()
        _spec_scatter(x[:p], ybar, s0, m, scatter)
        val = _spec_logq(x, p, m, const, scatter, a, work)

    scales = np.full(d, init_scale)
    n_keep = (n_iter - burn_in + thin - 1) // thin
    draws = np.empty((n_keep, d))
    logq = np.empty(n_keep)
    accept_post = np.zeros(d)
    post_iters = 0
    k = 0
    for it in range(n_iter):
        adapting = it < burn_in
        gamma = 2.0 / (ADAPT_OFFSET + it) ** ADAPT_DECAY if adapting else 0.0
        for j in range(d):
            old = x[j]
            x[j] = old + scales[j] * np.random.standard_normal()
            if j < p:
                _spec_scatter(x[:p], ybar, s0, m, scatter_prop)
                new_val = _spec_logq(x, p, m, const, scatter_prop, a, work)
            else:
                new_val = _spec_logq(x, p, m, const, scatter, a, work)
            acc = 0.0
            if np.log(np.random.random()) < new_val - val:
                val = new_val
                acc = 1.0
                if j < p:
                    for r in range(p):
                        for c in range(p):
                            scatter[r, c] = scatter_prop[r, c]
            else:
                x[j] = old
            if adapting:
                scales[j] *= np.exp(gamma * (acc - target_accept))
            else:
                accept_post[j] += acc
        if not adapting:
            post_iters += 1
            if (it - burn_in) % thin == 0:
                for j in range(d):
                    draws[k, j] = x[j]
                logq[k] = val
                k += 1
    denom = post_iters if post_iters > 0 else 1
    return draws[:k], logq[:k], accept_post / denom, scales, 0


# ---------------------------------------------------------------------------
# alternative-source chain


@njit(cache=True)
def _alt_blocks(mu, b, n_rows, sum_y, syy, sum_t, stt, sty, qsum, wq, qq, bst):
    """Residual blocks (qsum, wq, qq) for the current (mu, B)."""
    p = mu.shape[0]
    for i in range(p):
        acc = 0.0
        for j in range(p):
            acc += b[i, j] * sum_t[j]
        bst[i] = acc
    for i in range(p):
        qsum[i] = sum_y[i] - n_rows * mu[i] - bst[i]
    # wq = sty - sum_t mu' - stt b'
    for i in range(p):
        for j in range(p):
            acc = sty[i, j] - sum_t[i] * mu[j]
            for k in range(p):
                acc -= stt[i, k] * b[j, k]
            wq[i, j] = acc
    # qq = syy - sum_y mu' - mu sum_y' + N mu mu' - sty' b' - b sty
    #      + mu bst' + bst mu' + b stt b'
    for i in range(p):
        for j in range(p):
            acc = (
                syy[i, j]
                - sum_y[i] * mu[j]
                - mu[i] * sum_y[j]
                + n_rows * mu[i] * mu[j]
                + mu[i] * bst[j]
                + bst[i] * mu[j]
            )
            for k in range(p):
                acc -= sty[k, i] * b[j, k]
                acc -= b[i, k] * sty[k, j]
            for k in range(p):
                for l in range(p):
                    acc += b[i, k] * stt[k, l] * b[j, l]
            qq[i, j] = acc
    return 0


@njit(cache=True)
def _alt_small_gram(n_rows, sum_t, stt, qsum, wq, qq, gram):
    p = sum_t.shape[0]
    gram[0, 0] = n_rows
    for i in range(p):
        gram[0, 1 + i] = sum_t[i]
        gram[1 + i, 0] = sum_t[i]
        gram[0, 1 + p + i] = qsum[i]
        gram[1 + p + i, 0] = qsum[i]
    for i in range(p):
        for j in range(p):
            gram[1 + i, 1 + j] = stt[i, j]
            gram[1 + i, 1 + p + j] = wq[i, j]
            gram[1 + p + i, 1 + j] = wq[j, i]
            gram[1 + p + i, 1 + p + j] = qq[i, j]
    return gram


@njit(cache=True)
def alternative_chain_kernel(
    n_rows,
    sum_y,
    syy,
    sum_t,
    stt,
    sty,
    x0,
    n_iter,
    burn_in,
    thin,
    target_accept,
    init_scale,
    seed,
    max_init,
):
    """Componentwise adaptive RW chain for the alternative-source target.

    State layout: [mu (p), log-diag/sub-diag of B, log-diag/sub-diag of C].
    Returns (draws, logq_transformed, accept_rates, scales, status).
    """
    np.random.seed(seed)
    p = sum_y.shape[0]
    tri = p + p * (p - 1) // 2
    d = x0.shape[0]
    n_mu_b = p + tri

    b = np.zeros((p, p))
    c = np.zeros((p, p))
    work = np.zeros((p, p))
    qsum = np.zeros(p)
    bst = np.zeros(p)
    wq = np.zeros((p, p))
    qq = np.zeros((p, p))
    qq_prop = np.zeros((p, p))
    gram = np.zeros((1 + 2 * p, 1 + 2 * p))
    base_const = -0.5 * p * n_rows * LOG_2PI - 0.5 * (p + 2.0 * p * p) * np.log(n_rows)

    def _eval(x, qq_cur, small_logdet):
        _unpack_factor(x, p, p + tri, c)
        sum_log_c = 0.0
        for i in range(p):
            sum_log_c += x[p + tri + i]
        sum_log_b = 0.0
        for i in range(p):
            sum_log_b += x[p + i]
        tr = _trace_sandwich(c, qq_cur, work)
        val = (
            base_const
            - (n_rows + p) * sum_log_c
            - 0.5 * tr
            + 0.5 * p * small_logdet
            + sum_log_b
            + sum_log_c
        )
        if not np.isfinite(val):
            return -np.inf
        return val

    def _mu_b_stats(x, qq_out):
        _unpack_factor(x, p, p, b)
        _alt_blocks(x[:p], b, n_rows, sum_y, syy, sum_t, stt, sty, qsum, wq, qq_out, bst)
        _alt_small_gram(n_rows, sum_t, stt, qsum, wq, qq_out, gram)
        sign, logdet = _logdet_lu(gram)
        if sign <= 0.0:
            return -np.inf
        return logdet

    x = x0.copy()
    small_logdet = _mu_b_stats(x, qq)
    val = _eval(x, qq, small_logdet) if np.isfinite(small_logdet) else -np.inf
    attempt = 0
    while not np.isfinite(val):
        attempt += 1
        if attempt > max_init:
            return np.zeros((0, d)), np.zeros(0), np.zeros(d), np.zeros(d), 1
        for j in range(d):
            x[j] = x0[j] + init_scale * np.random.standard_normal()
        small_logdet = _mu_b_stats(x, qq)
        val = _eval(x, qq, small_logdet) if np.isfinite(small_logdet) else -np.inf

    scales = np.full(d, init_scale)
    n_keep = (n_iter - burn_in + thin - 1) // thin
    draws = np.empty((n_keep, d))
    logq = np.empty(n_keep)
    accept_post = np.zeros(d)
    post_iters = 0
    k = 0
    for it in range(n_iter):
        adapting = it < burn_in
        gamma = 2.0 / (ADAPT_OFFSET + it) ** ADAPT_DECAY if adapting else 0.0
        for j in range(d):
            old = x[j]
            x[j] = old + scales[j] * np.random.standard_normal()
            if j < n_mu_b:
                new_logdet = _mu_b_stats(x, qq_prop)
                new_val = _eval(x, qq_prop, new_logdet) if np.isfinite(new_logdet) else -np.inf
            else:
                new_val = _eval(x, qq, small_logdet)
            acc = 0.0
            if np.log(np.random.random()) < new_val - val:
                val = new_val
                acc = 1.0
                if j < n_mu_b:
                    small_logdet = new_logdet
                    for r in range(p):
                        for cc in range(p):
                            qq[r, cc] = qq_prop[r, cc]
            else:
                x[j] = old
            if adapting:
                scales[j] *= np.exp(gamma * (acc - target_accept))
            else:
                accept_post[j] += acc
        if not adapting:
            post_iters += 1
            if (it - burn_in) % thin == 0:
                for j in range(d):
                    draws[k, j] = x[j]
                logq[k] = val
                k += 1
    denom = post_iters if post_iters > 0 else 1
    return draws[:k], logq[:k], accept_post / denom, scales, 0


# ---------------------------------------------------------------------------
# Gibbs sweep loop for the Bayes factor


@njit(cache=True)
def _sample_inv_wishart_nb(scale, df, chol_buf, f_buf, bart, m_buf, w_buf, out):
    """Inverse-Wishart draw matching kernels.sample_inv_wishart's math."""
    p = scale.shape[0]
    if _chol(scale, chol_buf) != 0:
        return 1
    # bart: chi-square diagonal then strict-lower normals
    for i in range(p):
        for j in range(p):
            bart[i, j] = 0.0
    for i in range(p):
        bart[i, i] = np.sqrt(np.random.chisquare(df - i))
    for i in range(1, p):
        for j in range(i):
            bart[i, j] = np.random.standard_normal()
    # F = inv(chol)' (upper); M = F @ bart
    _inv_lower(chol_buf, f_buf)
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for k in range(p):
                acc += f_buf[k, i] * bart[k, j]
            m_buf[i, j] = acc
    # W = M M'; X = W^-1 via chol
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for k in range(p):
                acc += m_buf[i, k] * m_buf[j, k]
            w_buf[i, j] = acc
    if _chol(w_buf, chol_buf) != 0:
        return 1
    _sym_inv_from_chol(chol_buf, f_buf, out)
    # symmetrize
    for i in range(p):
        for j in range(i):
            v = 0.5 * (out[i, j] + out[j, i])
            out[i, j] = v
            out[j, i] = v
    return 0


@njit(cache=True)
def _draw_gaussian_precision(prec, rhs, chol_buf, mean_buf, out):
    """Draw N(prec^-1 rhs, prec^-1): solve for the mean, then add L^-T z."""
    p = prec.shape[0]
    if _chol(prec, chol_buf) != 0:
        return 1
    # mean: solve prec mean = rhs via chol (forward then back substitution)
    for i in range(p):
        acc = rhs[i]
        for k in range(i):
            acc -= chol_buf[i, k] * mean_buf[k]
        mean_buf[i] = acc / chol_buf[i, i]
    for i in range(p - 1, -1, -1):
        acc = mean_buf[i]
        for k in range(i + 1, p):
            acc -= chol_buf[k, i] * mean_buf[k]
        mean_buf[i] = acc / chol_buf[i, i]
    # noise: solve L' e = z (back substitution)
    z = np.empty(p)
    for i in range(p):
        z[i] = np.random.standard_normal()
    for i in range(p - 1, -1, -1):
        acc = z[i]
        for k in range(i + 1, p):
            acc -= chol_buf[k, i] * out[k]
        out[i] = acc / chol_buf[i, i]
    for i in range(p):
        out[i] += mean_buf[i]
    return 0


@njit(cache=True)
def _gauss_loglik_chol(rows, mean, ell, work_vec):
    """Sum of log N(row; mean, L L') over rows."""
    m, p = rows.shape
    half_logdet = 0.0
    for i in range(p):
        half_logdet += np.log(ell[i, i])
    total = -m * (0.5 * p * LOG_2PI + half_logdet)
    for r in range(m):
        for i in range(p):
            acc = rows[r, i] - mean[i]
            for k in range(i):
                acc -= ell[i, k] * work_vec[k]
            work_vec[i] = acc / ell[i, i]
        q = 0.0
        for i in range(p):
            q += work_vec[i] * work_vec[i]
        total -= 0.5 * q
    return total


@njit(cache=True)
def gibbs_bf_kernel(
    y_s,
    rows,
    idx,
    counts,
    source_sums,
    y_u,
    mu_pi,
    sigma_b,
    sigma_e,
    nu_b,
    nu_e,
    k_scal,
    state_mu_s,
    state_aat,
    state_mu_a,
    state_bbt,
    state_cct,
    n_sweeps,
    burn_in,
    seed,
):
    """Defense-posterior Gibbs chain; returns (log ratios, status).

    Follows the seven-update sweep exactly: mu_s, AA', mu_a, within
    effects, BB', between effects, CC', then records
    log f_s(y_u) - log f_a(y_u) after burn-in.
    """
    np.random.seed(seed)
    m, p = y_s.shape
    n_rows = rows.shape[0]
    n_sources = counts.shape[0]
    m_u = y_u.shape[0]

    mu_s = state_mu_s.copy()
    aat = state_aat.copy()
    mu_a = state_mu_a.copy()
    bbt = state_bbt.copy()
    cct = state_cct.copy()
    bt = np.zeros((n_sources, p))
    cv = np.zeros((n_rows, p))

    chol_buf = np.zeros((p, p))
    chol_buf2 = np.zeros((p, p))
    f_buf = np.zeros((p, p))
    bart = np.zeros((p, p))
    m_buf = np.zeros((p, p))
    w_buf = np.zeros((p, p))
    prec = np.zeros((p, p))
    rhs = np.zeros(p)
    mean_buf = np.zeros(p)
    vec_buf = np.zeros(p)
    scale = np.zeros((p, p))
    inv_a = np.zeros((p, p))
    inv_b = np.zeros((p, p))
    inv_c = np.zeros((p, p))
    inv_t = np.zeros((p, p))
    wmat = np.zeros((p, p))
    cov_cv = np.zeros((p, p))
    ybar_s = np.zeros(p)
    for i in range(p):
        acc = 0.0
        for r in range(m):
            acc += y_s[r, i]
        ybar_s[i] = acc / m
    grand = np.zeros(p)
    for i in range(p):
        acc = 0.0
        for r in range(n_rows):
            acc += rows[r, i]
        grand[i] = acc / n_rows

    big_cov = np.zeros((m_u * p, m_u * p))
    big_chol = np.zeros((m_u * p, m_u * p))
    big_vec = np.zeros(m_u * p)
    big_work = np.zeros(m_u * p)

    inv_sb = np.zeros((p, p))
    if _chol(sigma_b, chol_buf) != 0:
        return np.zeros(0), 1
    _sym_inv_from_chol(chol_buf, f_buf, inv_sb)
    inv_ksb = inv_sb / k_scal

    n_keep = n_sweeps - burn_in
    log_ratios = np.empty(n_keep)
    kept = 0

    for sweep in range(n_sweeps):
        # 1. mu_s | AA'
        if _chol(aat, chol_buf) != 0:
            return log_ratios[:kept], 2
        _sym_inv_from_chol(chol_buf, f_buf, inv_a)
        for i in range(p):
            for j in range(p):
                prec[i, j] = m * inv_a[i, j] + inv_sb[i, j]
            acc = 0.0
            for j in range(p):
                acc += m * inv_a[i, j] * ybar_s[j] + inv_sb[i, j] * mu_pi[j]
            rhs[i] = acc
        if _draw_gaussian_precision(prec, rhs, chol_buf, mean_buf, vec_buf) != 0:
            return log_ratios[:kept], 2
        for i in range(p):
            mu_s[i] = vec_buf[i]

        # 2. AA' | mu_s  ~ IW(S_s + Sigma_e, nu_e + m)
        for i in range(p):
            for j in range(p):
                acc = sigma_e[i, j]
                for r in range(m):
                    acc += (y_s[r, i] - mu_s[i]) * (y_s[r, j] - mu_s[j])
                scale[i, j] = acc
        if _sample_inv_wishart_nb(scale, nu_e + m, chol_buf, f_buf, bart, m_buf, w_buf, aat) != 0:
            return log_ratios[:kept], 2

        # 3. mu_a | BB', CC'
        for i in range(p):
            for j in range(p):
                w_buf[i, j] = bbt[i, j] + cct[i, j]
        if _chol(w_buf, chol_buf) != 0:
            return log_ratios[:kept], 2
        _sym_inv_from_chol(chol_buf, f_buf, inv_t)
        for i in range(p):
            for j in range(p):
                prec[i, j] = n_rows * inv_t[i, j] + inv_ksb[i, j]
            acc = 0.0
            for j in range(p):
                acc += n_rows * inv_t[i, j] * grand[j] + inv_ksb[i, j] * mu_pi[j]
            rhs[i] = acc
        if _draw_gaussian_precision(prec, rhs, chol_buf, mean_buf, vec_buf) != 0:
            return log_ratios[:kept], 2
        for i in range(p):
            mu_a[i] = vec_buf[i]

        # 4. within effects: mean W(y - mu_a), cov (BB'^-1 + CC'^-1)^-1
        if _chol(bbt, chol_buf) != 0:
            return log_ratios[:kept], 2
        _sym_inv_from_chol(chol_buf, f_buf, inv_b)
        if _chol(cct, chol_buf) != 0:
            return log_ratios[:kept], 2
        _sym_inv_from_chol(chol_buf, f_buf, inv_c)
        # W = CC' (BB'+CC')^-1 = inv(inv_b + inv_c) @ inv_b   (precision identity)
        for i in range(p):
            for j in range(p):
                w_buf[i, j] = inv_b[i, j] + inv_c[i, j]
        if _chol(w_buf, chol_buf) != 0:
            return log_ratios[:kept], 2
        _sym_inv_from_chol(chol_buf, f_buf, cov_cv)
        for i in range(p):
            for j in range(p):
                acc = 0.0
                for k2 in range(p):
                    acc += cov_cv[i, k2] * inv_b[k2, j]
                wmat[i, j] = acc
        if _chol(cov_cv, chol_buf2) != 0:
            return log_ratios[:kept], 2
        for r in range(n_rows):
            for i in range(p):
                acc = 0.0
                for j in range(p):
                    acc += wmat[i, j] * (rows[r, j] - mu_a[j])
                vec_buf[i] = acc
            for i in range(p):
                mean_buf[i] = np.random.standard_normal()
            for i in range(p):
                acc = vec_buf[i]
                for j in range(i + 1):
                    acc += chol_buf2[i, j] * mean_buf[j]
                cv[r, i] = acc

        # 5. BB' | within effects  ~ IW(S_v + Sigma_b, nu_b + N)
        for i in range(p):
            for j in range(p):
                acc = sigma_b[i, j]
                for r in range(n_rows):
                    acc += (rows[r, i] - mu_a[i] - cv[r, i]) * (rows[r, j] - mu_a[j] - cv[r, j])
                scale[i, j] = acc
        if _sample_inv_wishart_nb(scale, nu_b + n_rows, chol_buf, f_buf, bart, m_buf, w_buf, bbt) != 0:
            return log_ratios[:kept], 2

        # 6. between effects: per source, prec = BB'^-1 + m_i CC'^-1
        if _chol(bbt, chol_buf) != 0:
            return log_ratios[:kept], 2
        _sym_inv_from_chol(chol_buf, f_buf, inv_b)
        for s in range(n_sources):
            m_i = counts[s]
            for i in range(p):
                for j in range(p):
                    prec[i, j] = inv_b[i, j] + m_i * inv_c[i, j]
                acc = 0.0
                for j in range(p):
                    acc += inv_c[i, j] * (source_sums[s, j] - m_i * mu_a[j])
                rhs[i] = acc
            if _draw_gaussian_precision(prec, rhs, chol_buf, mean_buf, vec_buf) != 0:
                return log_ratios[:kept], 2
            for i in range(p):
                bt[s, i] = vec_buf[i]

        # 7. CC' | between effects  ~ IW(S_a + Sigma_e, nu_e + N)
        for i in range(p):
            for j in range(p):
                acc = sigma_e[i, j]
                for r in range(n_rows):
                    s = idx[r]
                    acc += (rows[r, i] - mu_a[i] - bt[s, i]) * (rows[r, j] - mu_a[j] - bt[s, j])
                scale[i, j] = acc
        if _sample_inv_wishart_nb(scale, nu_e + n_rows, chol_buf, f_buf, bart, m_buf, w_buf, cct) != 0:
            return log_ratios[:kept], 2

        if sweep >= burn_in:
            # log f_s(y_u | mu_s, AA')
            if _chol(aat, chol_buf) != 0:
                return log_ratios[:kept], 2
            log_fs = _gauss_loglik_chol(y_u, mu_s, chol_buf, vec_buf)
            # log f_a(y_u): N(vec; 1 kron mu_a, J kron BB' + I kron CC')
            for bi in range(m_u):
                for bj in range(m_u):
                    for i in range(p):
                        for j in range(p):
                            v = bbt[i, j]
                            if bi == bj:
                                v += cct[i, j]
                            big_cov[bi * p + i, bj * p + j] = v
            ok = 0
            n_big = m_u * p
            for i in range(n_big):
                for j in range(i + 1):
                    s2 = big_cov[i, j]
                    for k2 in range(j):
                        s2 -= big_chol[i, k2] * big_chol[j, k2]
                    if i == j:
                        if s2 <= 0.0 or not np.isfinite(s2):
                            ok = 1
                            break
                        big_chol[i, i] = np.sqrt(s2)
                    else:
                        big_chol[i, j] = s2 / big_chol[j, j]
                if ok != 0:
                    break
                for j in range(i + 1, n_big):
                    big_chol[i, j] = 0.0
            if ok != 0:
                return log_ratios[:kept], 2
            half_logdet = 0.0
            for i in range(n_big):
                half_logdet += np.log(big_chol[i, i])
            for bi in range(m_u):
                for i in range(p):
                    big_vec[bi * p + i] = y_u[bi, i] - mu_a[i]
            for i in range(n_big):
                acc = big_vec[i]
                for k2 in range(i):
                    acc -= big_chol[i, k2] * big_work[k2]
                big_work[i] = acc / big_chol[i, i]
            q = 0.0
            for i in range(n_big):
                q += big_work[i] * big_work[i]
            log_fa = -0.5 * (n_big * LOG_2PI + q) - half_logdet
            log_ratios[kept] = log_fs - log_fa
            kept += 1

    return log_ratios[:kept], 0
