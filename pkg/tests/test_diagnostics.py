"""Diagnostics: AUC oracles, calibration coverage, ECE identities."""

import numpy as np
import pytest

from fidsource.diagnostics import (
    CalibrationCurve,
    ScoreBatch,
    auc_distribution,
    calibrated_score_pair,
    calibration_discrepancy,
    ece_curve,
    empirical_auc,
)
from fidsource.errors import EmptyClass, InsufficientData


# ---------------------------------------------------------------------------
# empirical_auc


def test_auc_fully_separated():
    batch = ScoreBatch([2.0, 3.0, 4.0], [-1.0, 0.0, 1.0])
    assert empirical_auc(batch) == 1.0


def test_auc_identical_lists():
    batch = ScoreBatch([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert empirical_auc(batch) == 0.5


def test_auc_brute_force_pairs():
    batch = ScoreBatch([3.0, 1.0], [2.0, 0.0])
    # pairs: (3,2)+ (3,0)+ (1,2)- (1,0)+  ->  3/4
    assert empirical_auc(batch) == 0.75


def test_auc_monotone_transform_invariant():
    rng = np.random.default_rng(3)
    hp = rng.standard_normal(40) + 1.0
    hd = rng.standard_normal(60)
    base = empirical_auc(ScoreBatch(hp, hd))
    warped = empirical_auc(ScoreBatch(np.exp(hp), np.exp(hd)))
    cubed = empirical_auc(ScoreBatch(hp**3, hd**3))
    assert base == warped == cubed


def test_auc_empty_class():
    with pytest.raises(EmptyClass):
        empirical_auc(ScoreBatch([], [1.0]))


# ---------------------------------------------------------------------------
# auc_distribution


def test_auc_distribution_separated_is_degenerate():
    batch = ScoreBatch([5.0, 6.0, 7.0], [0.0, 1.0])
    dist = auc_distribution(batch, 200, np.random.default_rng(1))
    assert np.all(dist == 1.0)


def test_auc_distribution_mean_near_point_estimate():
    rng = np.random.default_rng(5)
    batch = ScoreBatch(rng.standard_normal(150) + 1.2, rng.standard_normal(200))
    dist = auc_distribution(batch, 2000, np.random.default_rng(7))
    assert abs(dist.mean() - empirical_auc(batch)) < 0.01
    assert np.all(np.diff(dist) >= 0)  # sorted output


# ---------------------------------------------------------------------------
# calibration_discrepancy


def test_calibrated_pair_median_within_band():
    rng = np.random.default_rng(11)
    batch = calibrated_score_pair(400, 400, rng)
    curve = calibration_discrepancy(batch, grid_size=40, n_boot=300, rng=np.random.default_rng(13))
    assert curve.covers_zero_simultaneous()
    assert np.all(curve.sim_lo <= curve.pw_lo + 1e-12)
    assert np.all(curve.sim_hi >= curve.pw_hi - 1e-12)
    assert np.all(curve.pw_lo <= curve.median + 1e-12)
    assert np.all(curve.median <= curve.pw_hi + 1e-12)


def test_shifted_pair_detected():
    rng = np.random.default_rng(17)
    batch = calibrated_score_pair(500, 500, rng)
    shifted = ScoreBatch(batch.hp_scores + 2.0, batch.hd_scores + 2.0, "shifted")
    curve = calibration_discrepancy(shifted, grid_size=40, n_boot=200, rng=np.random.default_rng(19))
    assert np.all(curve.median < 0.0)  # claimed ratios exceed observed frequencies


def test_calibration_deterministic_under_seed():
    rng = np.random.default_rng(23)
    batch = calibrated_score_pair(60, 80, rng)
    c1 = calibration_discrepancy(batch, grid_size=25, n_boot=100, rng=np.random.default_rng(29))
    c2 = calibration_discrepancy(batch, grid_size=25, n_boot=100, rng=np.random.default_rng(29))
    np.testing.assert_array_equal(c1.median, c2.median)
    np.testing.assert_array_equal(c1.sim_lo, c2.sim_lo)


def test_calibration_needs_enough_scores():
    with pytest.raises(InsufficientData):
        calibration_discrepancy(ScoreBatch(np.zeros(5), np.zeros(30)))


def test_calibration_grid_spans_central_pooled():
    rng = np.random.default_rng(31)
    batch = calibrated_score_pair(200, 200, rng)
    curve = calibration_discrepancy(batch, grid_size=30, n_boot=50, rng=np.random.default_rng(1))
    pooled = np.concatenate([batch.hp_scores, batch.hd_scores])
    assert curve.grid[0] == pytest.approx(np.quantile(pooled, 0.05))
    assert curve.grid[-1] == pytest.approx(np.quantile(pooled, 0.95))


@pytest.mark.slow
def test_calibrated_pair_pointwise_coverage_frequency():
    """Pointwise bands should cover zero at >= 90% of grid points on average.

    Moderate separation keeps kernel-bandwidth bias at the grid edges small
    relative to the bootstrap band width.
    """
    fractions = []
    for rep in range(20):
        rng = np.random.default_rng(100 + rep)
        batch = calibrated_score_pair(200, 200, rng, separation=1.0)
        curve = calibration_discrepancy(
            batch, grid_size=30, n_boot=200, rng=np.random.default_rng(500 + rep)
        )
        fractions.append(np.mean((curve.pw_lo <= 0.0) & (curve.pw_hi >= 0.0)))
    assert np.mean(fractions) >= 0.90


def test_curve_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(37)
    batch = calibrated_score_pair(50, 60, rng)
    curve = calibration_discrepancy(batch, grid_size=10, n_boot=50, rng=np.random.default_rng(2))
    path = curve.to_csv(tmp_path / "cal.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "grid,median,pw_lo,pw_hi,sim_lo,sim_hi"
    assert len(lines) == 11


# ---------------------------------------------------------------------------
# ece_curve


def test_ece_unit_ratio_equals_null():
    batch = ScoreBatch(np.zeros(8), np.zeros(12))
    curves = ece_curve(batch)
    np.testing.assert_array_equal(curves.observed, curves.null)


def test_ece_perfect_evidence_limit():
    batch = ScoreBatch(np.full(10, 40.0), np.full(10, -40.0))
    curves = ece_curve(batch, prior_log10_odds=np.array([0.0]))
    assert curves.observed[0] < 0.01


def test_ece_four_trial_hand_computation():
    # hp ratios 10 and 1; hd ratios 1 and 0.1, evaluated at even prior odds
    batch = ScoreBatch([1.0, 0.0], [0.0, -1.0])
    curves = ece_curve(batch, prior_log10_odds=np.array([0.0]))
    want = 0.5 * np.mean(np.log2([1 + 1 / 10, 1 + 1 / 1])) + 0.5 * np.mean(
        np.log2([1 + 1, 1 + 0.1])
    )
    assert curves.observed[0] == pytest.approx(want, rel=1e-12)


def test_ece_observed_dominates_calibrated():
    rng = np.random.default_rng(41)
    hp = rng.standard_normal(80) * 2 + 1.5
    hd = rng.standard_normal(120) * 1.5 - 1.0
    curves = ece_curve(ScoreBatch(hp, hd))
    assert np.all(curves.observed >= curves.calibrated - 1e-9)


def test_ece_nesting_for_calibrated_scores():
    rng = np.random.default_rng(43)
    batch = calibrated_score_pair(500, 500, rng)
    grid = np.linspace(-1.0, 1.0, 21)
    curves = ece_curve(batch, prior_log10_odds=grid)
    assert np.all(curves.calibrated <= curves.observed + 1e-9)
    assert np.all(curves.observed <= curves.null + 0.02)


def test_ece_csv_header(tmp_path):
    batch = ScoreBatch([1.0, 2.0], [-1.0])
    path = ece_curve(batch).to_csv(tmp_path / "ece.csv")
    assert path.read_text().splitlines()[0] == "prior_log10_odds,pi,ece_obs,ece_cal,ece_null"
