"""Data-model oracles: generators, estimators, screening, CSV round-trips."""

import numpy as np
import pytest

from fidsource.data import (
    AlternativeDataset,
    AlternativeParams,
    CaseBundle,
    MeasurementPanel,
    SpecificParams,
    estimate_alt_params,
    estimate_specific_params,
    estimate_t_hats,
    export_csv,
    generate_alternative,
    generate_specific,
    ingest_csv,
    preprocess_select_elements,
    select_elements,
)
from fidsource.errors import (
    InsufficientReplication,
    NonPositiveConcentration,
    SchemaError,
)
from fidsource.synthetic import ALL_ELEMENTS, SCREENING_ELEMENTS, synth_nfi_panels


def tri(entries):
    return np.asarray(entries, dtype=float)


@pytest.fixture
def spec_params():
    return SpecificParams(np.array([1.0, -0.5]), tri([[0.5, 0.0], [0.1, 0.3]]))


@pytest.fixture
def alt_params():
    return AlternativeParams(
        np.array([0.2, 0.8]),
        tri([[1.0, 0.0], [0.4, 0.8]]),
        tri([[0.3, 0.0], [-0.1, 0.2]]),
        tau=5.0,
    )


# ---------------------------------------------------------------------------
# containers


def test_panel_rejects_nonfinite():
    with pytest.raises(ValueError):
        MeasurementPanel("x", np.array([[np.nan, 1.0]]))


def test_params_valid_factors():
    with pytest.raises(ValueError):
        SpecificParams(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        SpecificParams(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(ValueError):
        AlternativeParams(np.zeros(1), np.eye(1), np.eye(1), tau=2.0)


def test_case_bundle_dimension_check(spec_params, alt_params):
    rng = np.random.default_rng(0)
    spec = generate_specific(spec_params, 3, rng)
    unk = generate_specific(spec_params, 2, rng)
    alt = generate_alternative(alt_params, 3, 2, rng)
    bundle = CaseBundle(spec, unk, alt, truth="H_p")
    assert bundle.dim == 2
    with pytest.raises(ValueError):
        CaseBundle(spec, MeasurementPanel("u", np.zeros((2, 3))), alt)


# ---------------------------------------------------------------------------
# generate_specific


def test_generate_specific_zero_noise_hook(spec_params):
    panel = generate_specific(spec_params, 4, None, z=np.zeros((4, 2)))
    np.testing.assert_allclose(panel.rows, np.tile(spec_params.mu_s, (4, 1)))


def test_generate_specific_moments(spec_params):
    rng = np.random.default_rng(101)
    params = SpecificParams(spec_params.mu_s, np.eye(2))
    panel = generate_specific(params, 100_000, rng)
    assert np.max(np.abs(panel.mean - params.mu_s)) < 0.02


def test_generate_specific_design_one_count(spec_params):
    panel = generate_specific(spec_params, 150, np.random.default_rng(1))
    assert panel.n_rows == 150


# ---------------------------------------------------------------------------
# generate_alternative


def test_generate_alternative_vanishing_between(alt_params):
    eps = 1e-6
    shrunk = AlternativeParams(
        alt_params.mu_a, eps * np.eye(2), alt_params.C, tau=5.0
    )
    rng = np.random.default_rng(5)
    data = generate_alternative(shrunk, 50, 30, rng)
    means = np.vstack([s.mean for s in data.sources])
    spread = np.std(means, axis=0)
    within_scale = np.sqrt(np.diag(shrunk.within_cov) / 30)
    assert np.all(spread < 5 * within_scale)


def test_generate_alternative_training_layout(alt_params):
    data = generate_alternative(alt_params, 659, 3, np.random.default_rng(2))
    assert data.n == 659
    assert data.total == 3 * 659
    assert np.all(data.counts == 3)


def test_generate_alternative_source_mean_covariance(alt_params):
    # Moment identity: cov of source means = tau/(tau-2) BB' + CC'/m_i.
    rng = np.random.default_rng(7)
    m_i = 4
    data = generate_alternative(alt_params, 10_000, m_i, rng)
    means = np.vstack([s.mean for s in data.sources])
    emp = np.cov(means.T)
    target = (5.0 / 3.0) * alt_params.between_cov + alt_params.within_cov / m_i
    assert np.max(np.abs(emp - target)) < 0.05 * np.max(np.abs(target))


# ---------------------------------------------------------------------------
# estimators


def test_estimate_alt_params_identical_measurements():
    rows = np.tile(np.array([1.0, 2.0]), (3, 1))
    data = AlternativeDataset(
        (MeasurementPanel("a", rows), MeasurementPanel("b", rows))
    )
    mu, bbt, cct = estimate_alt_params(data)
    np.testing.assert_allclose(mu, [1.0, 2.0])
    np.testing.assert_allclose(bbt, np.zeros((2, 2)))
    np.testing.assert_allclose(cct, np.zeros((2, 2)))


def test_estimate_alt_params_requires_replication():
    data = AlternativeDataset(
        (
            MeasurementPanel("a", np.array([[1.0, 2.0]])),
            MeasurementPanel("b", np.array([[3.0, 4.0]])),
        )
    )
    with pytest.raises(InsufficientReplication):
        estimate_alt_params(data)


def brute_alt_estimates(data):
    """Direct loop-based version of the three moment formulas."""
    ys = [s.rows for s in data.sources]
    n = len(ys)
    total = sum(y.shape[0] for y in ys)
    p = ys[0].shape[1]
    mu = sum(y.sum(axis=0) for y in ys) / total
    bbt = np.zeros((p, p))
    for y in ys:
        d = y.mean(axis=0) - mu
        bbt += np.outer(d, d)
    bbt /= n - 1
    cct = np.zeros((p, p))
    for y in ys:
        yb = y.mean(axis=0)
        for row in y:
            d = row - yb
            cct += np.outer(d, d)
    cct /= total - 1
    return mu, bbt, cct


def test_estimate_alt_params_matches_brute_force(alt_params):
    rng = np.random.default_rng(11)
    data = generate_alternative(alt_params, 3, 2, rng)
    got = estimate_alt_params(data)
    want = brute_alt_estimates(data)
    for g, w in zip(got, want):
        np.testing.assert_allclose(g, w, rtol=1e-12)


def test_estimate_specific_identical_rows():
    panel = MeasurementPanel("s", np.tile([1.0, 2.0], (2, 1)))
    mu, aat = estimate_specific_params(panel)
    np.testing.assert_allclose(mu, [1.0, 2.0])
    np.testing.assert_allclose(aat, np.zeros((2, 2)))


def test_estimate_specific_matches_brute_force():
    rng = np.random.default_rng(13)
    rows = rng.standard_normal((3, 2))
    panel = MeasurementPanel("s", rows)
    mu, aat = estimate_specific_params(panel)
    want_mu = rows.mean(axis=0)
    want = np.zeros((2, 2))
    for r in rows:
        d = r - want_mu
        want += np.outer(d, d)
    want /= 2
    np.testing.assert_allclose(mu, want_mu, rtol=1e-12)
    np.testing.assert_allclose(aat, want, rtol=1e-12)


def test_estimate_specific_needs_two_rows():
    with pytest.raises(InsufficientReplication):
        estimate_specific_params(MeasurementPanel("s", np.array([[1.0, 2.0]])))


def test_t_hats_zero_at_grand_mean(alt_params):
    rows = np.tile(np.array([0.2, 0.8]), (3, 1))
    data = AlternativeDataset(
        (MeasurementPanel("a", rows), MeasurementPanel("b", rows))
    )
    t_hats = estimate_t_hats(data, np.array([0.2, 0.8]), alt_params.B, alt_params.within_cov)
    np.testing.assert_allclose(t_hats, np.zeros((2, 2)), atol=1e-12)


def test_t_hats_scalar_reduction():
    rows_a = np.array([[1.0], [3.0]])
    rows_b = np.array([[5.0], [7.0]])
    data = AlternativeDataset(
        (MeasurementPanel("a", rows_a), MeasurementPanel("b", rows_b))
    )
    mu = np.array([4.0])
    b_hat = np.array([[2.0]])
    cct = np.array([[0.7]])
    t_hats = estimate_t_hats(data, mu, b_hat, cct)
    np.testing.assert_allclose(t_hats[:, 0], [(2.0 - 4.0) / 2.0, (6.0 - 4.0) / 2.0])


def test_t_hats_consistency_large_m(alt_params):
    rng = np.random.default_rng(17)
    n, m_i = 20, 1000
    z = rng.standard_normal((n, 2))
    g = rng.chisquare(5.0, size=n)
    t_true = z / np.sqrt(g / 5.0)[:, None]
    data = generate_alternative(alt_params, n, m_i, rng, t=t_true)
    t_hats = estimate_t_hats(
        data, alt_params.mu_a, alt_params.B, alt_params.within_cov
    )
    assert np.mean(np.abs(t_hats - t_true)) < 0.05


def test_roundtrip_recovery_specific(spec_params):
    rng = np.random.default_rng(19)
    panel = generate_specific(spec_params, 100_000, rng)
    mu, aat = estimate_specific_params(panel)
    assert np.max(np.abs(mu - spec_params.mu_s)) < 0.02
    true_cov = spec_params.cov
    assert np.linalg.norm(aat - true_cov) < 0.05 * np.linalg.norm(true_cov)


@pytest.mark.slow
def test_roundtrip_recovery_alternative(alt_params):
    rng = np.random.default_rng(23)
    data = generate_alternative(alt_params, 10_000, 50, rng)
    mu, bbt, cct = estimate_alt_params(data)
    assert np.max(np.abs(mu - alt_params.mu_a)) < 0.02
    cct_true = alt_params.within_cov
    assert np.linalg.norm(cct - cct_true) < 0.05 * np.linalg.norm(cct_true)
    bbt_target = (5.0 / 3.0) * alt_params.between_cov
    assert np.linalg.norm(bbt - bbt_target) < 0.10 * np.linalg.norm(bbt_target)


# ---------------------------------------------------------------------------
# element screening


def test_select_identity_when_q_equals_p():
    table = np.random.default_rng(0).standard_normal((10, 3))
    np.testing.assert_array_equal(select_elements(table, 3), [0, 1, 2])


def test_select_matches_sort_oracle():
    rng = np.random.default_rng(29)
    n, q, p = 200, 8, 3
    table = rng.uniform(1.0, 2.0, size=(n, q)) * rng.uniform(0.5, 10.0, size=q)
    got = select_elements(table, p)
    norms = np.linalg.norm(table, axis=0)
    sds = np.std(table / norms, axis=0, ddof=1)
    want = sorted(sorted(range(q), key=lambda j: (-sds[j], j))[:p])
    np.testing.assert_array_equal(got, want)


def test_select_invariant_to_column_rescale():
    rng = np.random.default_rng(31)
    table = rng.standard_normal((50, 5)) + 10.0
    base = select_elements(table, 2)
    scaled = table.copy()
    scaled[:, 3] *= 1000.0
    np.testing.assert_array_equal(select_elements(scaled, 2), base)


def test_preprocess_keeps_original_values():
    rng = np.random.default_rng(37)
    panels = [
        MeasurementPanel("a", rng.standard_normal((3, 4)) + 5),
        MeasurementPanel("b", rng.standard_normal((3, 4)) + 5),
    ]
    idx, reduced = preprocess_select_elements(panels, 2)
    assert len(idx) == 2
    np.testing.assert_allclose(reduced[0].rows, panels[0].rows[:, idx])


def test_synthetic_screening_picks_designated_pair():
    training, _calibration, elements = synth_nfi_panels(seed=1234)
    names = list(elements)
    cols = [names.index(e) for e in SCREENING_ELEMENTS]
    table = np.vstack([p.rows for p in training])[:, cols]
    idx = select_elements(table, 2)
    picked = {SCREENING_ELEMENTS[i] for i in idx}
    assert picked == {"Pb208", "Rb85"}


def test_synthetic_layout_dimensions():
    training, calibration, elements = synth_nfi_panels(seed=7)
    assert len(training) == 659 and all(p.n_rows == 3 for p in training)
    assert len(calibration) == 320 and all(p.n_rows == 5 for p in calibration)
    assert len(elements) == 18 and len(set(elements)) == 18
    assert set(SCREENING_ELEMENTS) <= set(elements)
    assert set(ALL_ELEMENTS) == set(elements)


# ---------------------------------------------------------------------------
# CSV round trip


def test_csv_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(41)
    panels = [
        MeasurementPanel("w1", rng.standard_normal((3, 4))),
        MeasurementPanel("w2", rng.standard_normal((2, 4))),
    ]
    path = export_csv(panels, ["E1", "E2", "E3", "E4"], tmp_path / "t.csv")
    back, elements = ingest_csv(path)
    assert elements == ["E1", "E2", "E3", "E4"]
    assert [p.source_id for p in back] == ["w1", "w2"]
    for a, b in zip(panels, back):
        np.testing.assert_array_equal(a.rows, b.rows)


def test_csv_accepts_training_layout(tmp_path):
    training, _, elements = synth_nfi_panels(seed=3)
    path = export_csv(training, elements, tmp_path / "train.csv")
    back, _ = ingest_csv(path)
    assert len(back) == 659
    assert sum(p.n_rows for p in back) == 3 * 659
    assert all(p.dim == 18 for p in back)


def test_csv_missing_cell_names_location(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "source_id,fragment_id,E1,E2\n" "w1,f1,1.0,2.0\n" "w1,f2,1.0,\n"
    )
    with pytest.raises(SchemaError, match=r"bad.csv:3.*column 4"):
        ingest_csv(path)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,frag,E1\nw1,f1,1.0\n")
    with pytest.raises(SchemaError):
        ingest_csv(path)


def test_csv_log_transform_rejects_nonpositive(tmp_path):
    path = tmp_path / "raw.csv"
    path.write_text("source_id,fragment_id,E1\nw1,f1,10.0\nw1,f2,-3.0\n")
    with pytest.raises(NonPositiveConcentration):
        ingest_csv(path, log_transform=True)


def test_csv_log_transform_applies(tmp_path):
    path = tmp_path / "raw.csv"
    path.write_text("source_id,fragment_id,E1\nw1,f1,10.0\nw1,f2,100.0\n")
    panels, _ = ingest_csv(path, log_transform=True)
    np.testing.assert_allclose(panels[0].rows[:, 0], np.log([10.0, 100.0]))
