"""Discrimination and calibration diagnostics over batches of trial scores.

Scores are log10 evidence ratios, one list per true hypothesis.  The
calibration tools treat the scores as claimed likelihood ratios and measure
how far the claim is from the frequency behavior the batch actually shows:
a kernel density ratio discrepancy on the log10 scale, and the empirical
cross-entropy against its PAV-recalibrated and uninformative references.

Where the published analyses used external fiducial band software, the
bands here are nonparametric bootstrap approximations and are labeled as
such in the output metadata.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import EmptyClass, InsufficientData
from .kernels import pav_fit

DENSITY_FLOOR = 1e-300
LOG2 = np.log(2.0)
LN10 = np.log(10.0)


@dataclass(frozen=True)
class ScoreBatch:
    """log10 evidence scores grouped by the true hypothesis."""

    hp_scores: np.ndarray
    hd_scores: np.ndarray
    method: str = ""

    def __post_init__(self):
        hp = np.asarray(self.hp_scores, dtype=float).ravel()
        hd = np.asarray(self.hd_scores, dtype=float).ravel()
        if np.any(np.isnan(hp)) or np.any(np.isnan(hd)):
            raise ValueError("score batches must be NaN-free")
        object.__setattr__(self, "hp_scores", hp)
        object.__setattr__(self, "hd_scores", hd)

    def require_nonempty(self):
        if self.hp_scores.size == 0 or self.hd_scores.size == 0:
            raise EmptyClass(f"batch {self.method!r} has an empty class")
        return self


def empirical_auc(batch):
    """Mann-Whitney AUC: P(hp score > hd score) + 0.5 P(tie)."""
    batch.require_nonempty()
    hp, hd = batch.hp_scores, batch.hd_scores
    ranks = stats.rankdata(np.concatenate([hp, hd]))
    r_hp = ranks[: hp.size].sum()
    u = r_hp - hp.size * (hp.size + 1) / 2.0
    return float(u / (hp.size * hd.size))


def auc_distribution(batch, n_resamples, rng):
    """Bootstrap distribution of the AUC (sorted), resampling each class.

    A nonparametric stand-in for the cited fiducial AUC distribution; the
    qualitative role (uncertainty of the discrimination summary) is the
    same.
    """
    batch.require_nonempty()
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    hp, hd = batch.hp_scores, batch.hd_scores
    out = np.empty(n_resamples)
    for b in range(n_resamples):
        hp_b = hp[rng.integers(0, hp.size, hp.size)]
        hd_b = hd[rng.integers(0, hd.size, hd.size)]
        out[b] = empirical_auc(ScoreBatch(hp_b, hd_b, batch.method))
    return np.sort(out)


@dataclass(frozen=True)
class CalibrationCurve:
    """Log-discrepancy curve with pointwise and simultaneous bootstrap bands."""

    grid: np.ndarray
    median: np.ndarray
    pw_lo: np.ndarray
    pw_hi: np.ndarray
    sim_lo: np.ndarray
    sim_hi: np.ndarray
    meta: dict

    def covers_zero_simultaneous(self):
        return bool(np.all((self.sim_lo <= 0.0) & (self.sim_hi >= 0.0)))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["grid", "median", "pw_lo", "pw_hi", "sim_lo", "sim_hi"])
            for row in zip(self.grid, self.median, self.pw_lo, self.pw_hi, self.sim_lo, self.sim_hi):
                writer.writerow([repr(float(v)) for v in row])
        return path


def _kde_log10_density(values, grid):
    kde = stats.gaussian_kde(values, bw_method="silverman")
    return np.log10(np.maximum(kde(grid), DENSITY_FLOOR))


def _discrepancy_curve(hp, hd, grid):
    return _kde_log10_density(hp, grid) - _kde_log10_density(hd, grid) - grid


def calibration_discrepancy(batch, grid_size=50, n_boot=400, rng=None, level=0.95):
    """Log10 discrepancy between the claimed ratio and the density-ratio estimate.

    At each grid value v the discrepancy is
    log10[ KDE_hp(v) / KDE_hd(v) ] - v, zero everywhere for perfectly
    calibrated scores.  Gaussian KDEs with Silverman bandwidth on the log10
    scale; grid spans the central 90% of the pooled scores.  Median and
    bands come from bootstrap resampling of both score lists: pointwise
    bands are per-grid quantiles, the simultaneous band inflates the median
    by the ``level`` quantile of the sup deviation (and always contains the
    pointwise band).
    """
    batch.require_nonempty()
    hp, hd = batch.hp_scores, batch.hd_scores
    if hp.size < 20 or hd.size < 20:
        raise InsufficientData("calibration needs at least 20 scores per class")
    rng = rng or np.random.default_rng(0)
    pooled = np.concatenate([hp, hd])
    lo, hi = np.quantile(pooled, [0.05, 0.95])
    grid = np.linspace(lo, hi, grid_size)

    curves = np.empty((n_boot, grid_size))
    for b in range(n_boot):
        hp_b = hp[rng.integers(0, hp.size, hp.size)]
        hd_b = hd[rng.integers(0, hd.size, hd.size)]
        curves[b] = _discrepancy_curve(hp_b, hd_b, grid)

    median = np.median(curves, axis=0)
    alpha = (1.0 - level) / 2.0
    pw_lo = np.quantile(curves, alpha, axis=0)
    pw_hi = np.quantile(curves, 1.0 - alpha, axis=0)
    sup_dev = np.max(np.abs(curves - median), axis=1)
    c = float(np.quantile(sup_dev, level))
    sim_lo = np.minimum(pw_lo, median - c)
    sim_hi = np.maximum(pw_hi, median + c)
    return CalibrationCurve(
        grid=grid,
        median=median,
        pw_lo=pw_lo,
        pw_hi=pw_hi,
        sim_lo=sim_lo,
        sim_hi=sim_hi,
        meta={
            "method": batch.method,
            "n_boot": n_boot,
            "level": level,
            "bands": "bootstrap approximation",
            "n_hp": int(hp.size),
            "n_hd": int(hd.size),
        },
    )


def _log2_1p_pow10(x):
    """log2(1 + 10^x), stable for any real x (including +-inf)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = x > 0
    out[big] = x[big] * (LN10 / LOG2) + np.log1p(np.power(10.0, -x[big])) / LOG2
    out[~big] = np.log1p(np.power(10.0, x[~big])) / LOG2
    return out


@dataclass(frozen=True)
class EceCurves:
    """Empirical cross-entropy against prior log10 odds, with references."""

    prior_log10_odds: np.ndarray
    pi: np.ndarray
    observed: np.ndarray
    calibrated: np.ndarray
    null: np.ndarray
    meta: dict

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["prior_log10_odds", "pi", "ece_obs", "ece_cal", "ece_null"])
            for row in zip(self.prior_log10_odds, self.pi, self.observed, self.calibrated, self.null):
                writer.writerow([repr(float(v)) for v in row])
        return path


def _ece_from_scores(hp_scores, hd_scores, log10_odds):
    """ECE(pi) for each prior: penalties are log2(1 + 1/(R O)) on hp and
    log2(1 + R O) on hd, averaged within class and prior-weighted."""
    pi = 1.0 / (1.0 + np.power(10.0, -log10_odds))
    hp_pen = np.array(
        [np.mean(_log2_1p_pow10(-(hp_scores + lo))) for lo in log10_odds]
    )
    hd_pen = np.array([np.mean(_log2_1p_pow10(hd_scores + lo)) for lo in log10_odds])
    return pi * hp_pen + (1.0 - pi) * hd_pen


def ece_curve(batch, prior_log10_odds=None):
    """Observed, PAV-recalibrated, and uninformative ECE curves.

    The recalibrated scores come from pool-adjacent-violators on the pooled
    batch: fitted posteriors are converted back to likelihood ratios by
    removing the batch's empirical prior odds.  Pure-class PAV levels give
    zero or infinite ratios exactly where they cost nothing, so no clipping
    is needed.
    """
    batch.require_nonempty()
    if prior_log10_odds is None:
        prior_log10_odds = np.linspace(-2.5, 2.5, 51)
    prior_log10_odds = np.asarray(prior_log10_odds, dtype=float)
    hp, hd = batch.hp_scores, batch.hd_scores

    observed = _ece_from_scores(hp, hd, prior_log10_odds)

    scores = np.concatenate([hp, hd])
    labels = np.concatenate([np.ones(hp.size), np.zeros(hd.size)])
    posterior = pav_fit(scores, labels)
    with np.errstate(divide="ignore"):
        cal = np.log10(posterior) - np.log10(1.0 - posterior) - np.log10(hp.size / hd.size)
    calibrated = _ece_from_scores(cal[: hp.size], cal[hp.size :], prior_log10_odds)

    # the uninformative reference: the same batch with every ratio set to 1
    null = _ece_from_scores(np.zeros(hp.size), np.zeros(hd.size), prior_log10_odds)

    pi = 1.0 / (1.0 + np.power(10.0, -prior_log10_odds))
    return EceCurves(
        prior_log10_odds=prior_log10_odds,
        pi=pi,
        observed=observed,
        calibrated=calibrated,
        null=null,
        meta={"method": batch.method, "n_hp": int(hp.size), "n_hd": int(hd.size)},
    )


def calibrated_score_pair(n_hp, n_hd, rng, separation=2.0):
    """Synthesize an exactly calibrated score batch.

    Gaussian score densities N(+d/2, s2) under hp and N(-d/2, s2) under hd
    with s2 = d/ln(10) satisfy density-ratio(v) = 10^v identically.
    """
    sd = np.sqrt(separation / LN10)
    hp = separation / 2.0 + sd * rng.standard_normal(n_hp)
    hd = -separation / 2.0 + sd * rng.standard_normal(n_hd)
    return ScoreBatch(hp, hd, "calibrated-synthetic")
