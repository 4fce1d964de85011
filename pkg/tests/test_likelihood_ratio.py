"""Likelihood ratio engine: MLE oracles, EM properties, ratio identities."""

import numpy as np
import pytest
from scipy import optimize

from fidsource.data import (
    AlternativeDataset,
    AlternativeParams,
    CaseBundle,
    MeasurementPanel,
    SpecificParams,
    generate_alternative,
    generate_specific,
)
from fidsource.errors import DegenerateSample
from fidsource.kernels import mvn_logpdf
from fidsource.likelihood_ratio import (
    alt_marginal_loglik,
    compute_lr,
    compute_lr_arrays,
    mle_alternative,
    mle_specific,
    new_source_loglik,
)


def tiny_alt(rng, n=6, m_i=3, p=2, b_scale=0.8, c_scale=0.4):
    params = AlternativeParams(
        rng.standard_normal(p),
        b_scale * np.eye(p) + np.tril(0.1 * rng.standard_normal((p, p)), -1),
        c_scale * np.eye(p) + np.tril(0.05 * rng.standard_normal((p, p)), -1),
        tau=5.0,
    )
    return generate_alternative(params, n, m_i, rng), params


# ---------------------------------------------------------------------------
# mle_specific


def test_mle_specific_two_points_scalar():
    panel = MeasurementPanel("s", np.array([[1.0], [3.0]]))
    fit = mle_specific(panel)
    assert fit.params.mu_s[0] == pytest.approx(2.0)
    assert fit.params.aat[0, 0] == pytest.approx(1.0)  # squared half-distance


def test_mle_specific_identical_rows_degenerate():
    panel = MeasurementPanel("s", np.tile([1.0, 2.0], (3, 1)))
    with pytest.raises(DegenerateSample):
        mle_specific(panel)


def test_mle_specific_near_collinear_degenerate():
    base = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    panel = MeasurementPanel("s", base + 1e-9)
    with pytest.raises(DegenerateSample):
        mle_specific(panel)


def test_mle_specific_matches_numerical_optimizer():
    rng = np.random.default_rng(5)
    rows = rng.standard_normal((10, 2)) * 0.7 + 1.0
    fit = mle_specific(MeasurementPanel("s", rows))

    def neg_loglik(x):
        mu = x[:2]
        chol = np.array([[np.exp(x[2]), 0.0], [x[4], np.exp(x[3])]])
        return -float(np.sum(mvn_logpdf(rows, mu, chol @ chol.T)))

    aat_chol = np.linalg.cholesky(fit.params.aat)
    x0 = np.array(
        [
            fit.params.mu_s[0] + 0.05,
            fit.params.mu_s[1] - 0.05,
            np.log(aat_chol[0, 0]) + 0.03,
            np.log(aat_chol[1, 1]) - 0.03,
            aat_chol[1, 0] + 0.02,
        ]
    )
    res = optimize.minimize(
        neg_loglik, x0, method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20_000, "maxfev": 20_000},
    )
    assert fit.log_lik >= -res.fun - 1e-9  # analytic optimum dominates
    assert abs(fit.log_lik - (-res.fun)) < 1e-6 * max(1.0, abs(fit.log_lik))


# ---------------------------------------------------------------------------
# alt_marginal_loglik


def test_alt_marginal_zero_between_is_iid_sum():
    rng = np.random.default_rng(7)
    data, _ = tiny_alt(rng, n=3, m_i=2)
    mu = rng.standard_normal(2)
    cct = np.array([[0.5, 0.1], [0.1, 0.4]])
    got = alt_marginal_loglik(data, mu, np.zeros((2, 2)), cct)
    rows, _ = data.stacked()
    want = float(np.sum(mvn_logpdf(rows, mu, cct)))
    assert got == pytest.approx(want, rel=1e-10)


def test_alt_marginal_single_obs_single_source():
    rng = np.random.default_rng(9)
    row = rng.standard_normal(2)
    data = AlternativeDataset((MeasurementPanel("a", row[None, :]),))
    mu = np.zeros(2)
    bbt = np.array([[0.3, 0.05], [0.05, 0.2]])
    cct = np.array([[0.4, 0.0], [0.0, 0.3]])
    got = alt_marginal_loglik(data, mu, bbt, cct)
    want = float(mvn_logpdf(row, mu, bbt + cct))
    assert got == pytest.approx(want, rel=1e-12)


def test_alt_marginal_matches_dense_joint():
    rng = np.random.default_rng(11)
    data, _ = tiny_alt(rng, n=2, m_i=2, p=1)
    mu = np.array([0.3])
    bbt = np.array([[0.6]])
    cct = np.array([[0.2]])
    got = alt_marginal_loglik(data, mu, bbt, cct)
    # dense 4x4 block-diagonal joint Gaussian over both sources
    want = 0.0
    for s in data.sources:
        cov = bbt[0, 0] * np.ones((2, 2)) + cct[0, 0] * np.eye(2)
        want += float(mvn_logpdf(s.rows[:, 0], np.full(2, mu[0]), cov))
    assert got == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# mle_alternative (EM)


def test_em_monotone_loglik():
    rng = np.random.default_rng(13)
    data, _ = tiny_alt(rng, n=8, m_i=3)
    fit = mle_alternative(data)
    assert fit.converged
    diffs = np.diff(fit.history)
    assert np.all(diffs >= -1e-10 * np.maximum(1.0, np.abs(fit.history[:-1])))


def test_em_zero_between_recovery():
    rng = np.random.default_rng(17)
    params = AlternativeParams(
        np.array([1.0, -0.5]),
        1e-8 * np.eye(2),
        np.array([[0.5, 0.0], [0.1, 0.4]]),
        tau=5.0,
    )
    data = generate_alternative(params, 150, 4, rng)
    fit = mle_alternative(data)
    assert np.trace(fit.params.bbt) < 0.05 * np.trace(fit.params.cct)


def test_em_matches_numerical_optimizer_p1():
    rng = np.random.default_rng(19)
    data, _ = tiny_alt(rng, n=6, m_i=3, p=1)
    fit = mle_alternative(data, tol=1e-12, max_iter=4000)

    def neg_loglik(x):
        mu = np.array([x[0]])
        bbt = np.array([[np.exp(2 * x[1])]])
        cct = np.array([[np.exp(2 * x[2])]])
        return -alt_marginal_loglik(data, mu, bbt, cct)

    x0 = np.array(
        [
            fit.params.mu_a[0],
            0.5 * np.log(max(fit.params.bbt[0, 0], 1e-8)),
            0.5 * np.log(fit.params.cct[0, 0]),
        ]
    )
    res = optimize.minimize(
        neg_loglik, x0 + 0.05, method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-13, "maxiter": 20_000, "maxfev": 20_000},
    )
    assert abs(fit.log_lik - (-res.fun)) < 1e-4


# ---------------------------------------------------------------------------
# compute_lr


def test_lr_empty_unknown_is_unity():
    rng = np.random.default_rng(23)
    data, _ = tiny_alt(rng, n=5, m_i=3)
    spec_rows = rng.standard_normal((4, 2))
    res = compute_lr_arrays(spec_rows, np.zeros((0, 2)), data)
    assert not res.failed
    assert res.log10_lr == pytest.approx(0.0, abs=1e-9)


def test_lr_failure_flag_not_exception():
    rng = np.random.default_rng(29)
    data, _ = tiny_alt(rng, n=5, m_i=3)
    spec = MeasurementPanel("s", np.tile([1.0, 2.0], (3, 1)))  # degenerate
    unknown = MeasurementPanel("u", rng.standard_normal((2, 2)))
    case = CaseBundle(spec, unknown, data, truth="H_d")
    res = compute_lr(case)
    assert res.failed
    assert res.log10_lr is None
    assert "DegenerateSample" in res.reason


def test_lr_affine_invariance():
    rng = np.random.default_rng(31)
    diffs = []
    for _ in range(5):
        data, _ = tiny_alt(rng, n=10, m_i=3)
        spec_params = SpecificParams(rng.standard_normal(2), 0.5 * np.eye(2))
        spec = generate_specific(spec_params, 6, rng)
        unknown = generate_specific(spec_params, 2, rng, source_id="u")
        base = compute_lr_arrays(spec.rows, unknown.rows, data)
        assert not base.failed

        m = rng.standard_normal((2, 2)) + 2.5 * np.eye(2)
        b = rng.standard_normal(2)
        mapped_alt = AlternativeDataset(
            tuple(
                MeasurementPanel(s.source_id, s.rows @ m.T + b) for s in data.sources
            )
        )
        mapped = compute_lr_arrays(spec.rows @ m.T + b, unknown.rows @ m.T + b, mapped_alt)
        assert not mapped.failed
        diffs.append(abs(mapped.log10_lr - base.log10_lr))
    assert max(diffs) < 1e-6


def test_lr_deterministic_refit():
    rng = np.random.default_rng(37)
    data, _ = tiny_alt(rng, n=5, m_i=3)
    spec = rng.standard_normal((4, 2))
    unknown = rng.standard_normal((2, 2)) * 0.5
    r1 = compute_lr_arrays(spec, unknown, data)
    r2 = compute_lr_arrays(spec.copy(), unknown.copy(), data)
    assert r1.log10_lr == r2.log10_lr


def test_mle_specific_dominates_perturbations():
    rng = np.random.default_rng(41)
    rows = rng.standard_normal((8, 2))
    fit = mle_specific(MeasurementPanel("s", rows))
    for _ in range(100):
        mu = fit.params.mu_s + 0.1 * rng.standard_normal(2)
        w = rng.standard_normal((2, 2)) * 0.1
        cov = fit.params.aat + w @ w.T
        trial = float(np.sum(mvn_logpdf(rows, mu, cov)))
        assert trial <= fit.log_lik + 1e-10


def test_new_source_loglik_block_structure():
    rng = np.random.default_rng(43)
    from fidsource.likelihood_ratio import GaussianAltParams

    params = GaussianAltParams(
        rng.standard_normal(2),
        np.array([[0.4, 0.1], [0.1, 0.3]]),
        np.array([[0.2, 0.0], [0.0, 0.15]]),
    )
    rows = rng.standard_normal((2, 2))
    got = new_source_loglik(rows, params)
    cov = np.kron(np.ones((2, 2)), params.bbt) + np.kron(np.eye(2), params.cct)
    want = float(mvn_logpdf((rows - params.mu_a).ravel(), np.zeros(4), cov))
    assert got == pytest.approx(want, rel=1e-12)
