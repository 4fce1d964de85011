"""Simulation designs, trial orchestration, persistence, and plot-data emission.

Three designs mirror the comparative study: (1) fully synthetic data with
a large specific panel, (2) the same with the casework panel size of three
fragments, (3) resampling of a user-supplied real dataset.  Every trial
draws fresh data from its own counter-derived seed, runs all four engines
(GFF, both Bayes-factor priors, LR), and appends one deterministic record
to the results table; wall times go to a sidecar so reruns stay
byte-identical.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bayes_factor import compute_bf, prior_preset
from .data import (
    AlternativeDataset,
    AlternativeParams,
    CaseBundle,
    MeasurementPanel,
    SpecificParams,
    estimate_alt_params,
    estimate_specific_params,
    estimate_t_hats,
    generate_alternative,
    generate_specific,
    ingest_csv,
    select_elements,
)
from .diagnostics import (
    ScoreBatch,
    auc_distribution,
    calibration_discrepancy,
    ece_curve,
    empirical_auc,
)
from .errors import ConfigError, EmptyResults, FidsourceError, NotPositiveDefinite
from .gf_alternative import sample_gf_alternative
from .gf_specific import sample_gf_specific
from .gff import compute_gff
from .kernels import chol_with_jitter
from .likelihood_ratio import compute_lr, compute_lr_arrays
from .mcmc import ChainConfig
from .synthetic import SCREENING_ELEMENTS, synth_nfi_panels

PACKAGE_VERSION = "0.1.0"

METHODS = ("gff", "bf_p", "bf_d", "lr")


@dataclass(frozen=True)
class EngineSettings:
    """Per-engine Monte Carlo budgets; scale presets pick sensible defaults."""

    gf_n_iter: int = 50_000
    gf_burn_in: int = 10_000
    alt_n_iter: int = 50_000
    alt_burn_in: int = 10_000
    n_importance: int = 4096
    denominator_thin: int = 2000
    gibbs_sweeps: int = 20_000
    gibbs_burn_in: int = 5_000
    pool_importance: bool = True
    tau: float = 5.0

    def to_dict(self):
        return {
            "gf_n_iter": self.gf_n_iter,
            "gf_burn_in": self.gf_burn_in,
            "alt_n_iter": self.alt_n_iter,
            "alt_burn_in": self.alt_burn_in,
            "n_importance": self.n_importance,
            "denominator_thin": self.denominator_thin,
            "gibbs_sweeps": self.gibbs_sweeps,
            "gibbs_burn_in": self.gibbs_burn_in,
            "pool_importance": self.pool_importance,
            "tau": self.tau,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


PAPER_ENGINES = EngineSettings()
DESK_ENGINES = EngineSettings(
    gf_n_iter=12_000,
    gf_burn_in=3_000,
    alt_n_iter=12_000,
    alt_burn_in=3_000,
    n_importance=1024,
    denominator_thin=800,
    gibbs_sweeps=6_000,
    gibbs_burn_in=1_500,
)

# trial counts and panel sizes per design and scale
_SCALE_COUNTS = {
    "paper": dict(n=659, m_i=3, m_u=2, n_hp_trials=320, n_hd_trials=3000),
    "desk": dict(n=100, m_i=3, m_u=2, n_hp_trials=60, n_hd_trials=200),
}
_DESIGN_M = {1: 150, 2: 3, 3: 3}


@dataclass(frozen=True)
class DesignConfig:
    """Complete, serializable description of one simulation run."""

    design_id: int
    scale: str
    n: int
    m: int
    m_i: int
    m_u: int
    n_hp_trials: int
    n_hd_trials: int
    master_seed: int = 0
    outdir: str | None = None
    dataset_dir: str | None = None
    synthetic_seed: int = 1234
    specific_truth_rows: int = 3
    p: int = 2
    engines: EngineSettings = field(default_factory=EngineSettings)

    @classmethod
    def preset(cls, design_id, scale="desk", **overrides):
        """Standard configuration for a design at 'paper' or 'desk' scale."""
        if scale not in _SCALE_COUNTS:
            raise ConfigError(f"scale must be 'paper' or 'desk', got {scale!r}")
        if design_id not in (1, 2, 3):
            raise ConfigError(f"design_id must be 1, 2, or 3, got {design_id}")
        counts = dict(_SCALE_COUNTS[scale])
        engines = PAPER_ENGINES if scale == "paper" else DESK_ENGINES
        cfg = cls(
            design_id=design_id,
            scale=scale,
            m=_DESIGN_M[design_id],
            engines=engines,
            **counts,
        )
        if overrides:
            cfg = replace(cfg, **overrides)
        return cfg.validate()

    def validate(self):
        if self.design_id not in (1, 2, 3):
            raise ConfigError(f"design_id must be 1, 2, or 3, got {self.design_id}")
        if self.design_id == 1 and self.m != 150:
            raise ConfigError("design 1 requires m = 150")
        if self.design_id == 2 and self.m != 3:
            raise ConfigError("design 2 requires m = 3")
        if self.design_id == 3 and not self.dataset_dir:
            raise ConfigError("design 3 requires a dataset directory")
        for name in ("n", "m", "m_i", "m_u", "n_hp_trials", "n_hd_trials", "p"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.specific_truth_rows < 2:
            raise ConfigError("specific_truth_rows must be >= 2")
        return self

    @property
    def n_trials(self):
        return self.n_hp_trials + self.n_hd_trials

    def to_dict(self):
        d = {
            "design_id": self.design_id,
            "scale": self.scale,
            "n": self.n,
            "m": self.m,
            "m_i": self.m_i,
            "m_u": self.m_u,
            "n_hp_trials": self.n_hp_trials,
            "n_hd_trials": self.n_hd_trials,
            "master_seed": self.master_seed,
            "outdir": self.outdir,
            "dataset_dir": self.dataset_dir,
            "synthetic_seed": self.synthetic_seed,
            "specific_truth_rows": self.specific_truth_rows,
            "p": self.p,
            "engines": self.engines.to_dict(),
        }
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        engines = EngineSettings.from_dict(d.pop("engines"))
        return cls(engines=engines, **d).validate()

    def to_file(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return Path(path)

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TrialResult:
    """One simulated case: per-method log10 values or failure reasons."""

    trial_id: int
    truth: str
    seed: str  # hex of the 128-bit derived seed
    log10_gff: float | None = None
    log10_bf_p: float | None = None
    log10_bf_d: float | None = None
    log10_lr: float | None = None
    failures: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def value(self, method):
        return getattr(self, f"log10_{method}")

    @property
    def any_failure(self):
        return bool(self.failures)

    def to_record(self):
        """Deterministic serializable record (timings live in the sidecar)."""
        return {
            "trial_id": self.trial_id,
            "truth": self.truth,
            "seed": self.seed,
            "log10_gff": self.log10_gff,
            "log10_bf_p": self.log10_bf_p,
            "log10_bf_d": self.log10_bf_d,
            "log10_lr": self.log10_lr,
            "failures": dict(sorted(self.failures.items())),
            "meta": {k: self.meta[k] for k in sorted(self.meta)},
        }

    @classmethod
    def from_record(cls, d, timings=None):
        return cls(
            trial_id=d["trial_id"],
            truth=d["truth"],
            seed=d["seed"],
            log10_gff=d.get("log10_gff"),
            log10_bf_p=d.get("log10_bf_p"),
            log10_bf_d=d.get("log10_bf_d"),
            log10_lr=d.get("log10_lr"),
            failures=dict(d.get("failures", {})),
            timings=dict(timings or {}),
            meta=dict(d.get("meta", {})),
        )


def derive_trial_seed(master_seed, trial_id):
    """Counter-based 128-bit seed, collision-free and rerunnable in isolation."""
    ss = np.random.SeedSequence([int(master_seed), int(trial_id)])
    hi, lo = (int(w) for w in ss.generate_state(2, np.uint64))
    return (hi << 64) | lo


@dataclass(frozen=True)
class DesignTruth:
    """Everything derived from the source dataset before any trial runs."""

    alt_params: AlternativeParams
    specific_params: tuple
    selected_columns: tuple
    selected_names: tuple
    training: AlternativeDataset
    calibration: tuple
    summaries: tuple  # (mu_hat, bbt_hat, cct_hat) of the training data


def prepare_design_truth(config):
    """Screen elements, reduce panels, and derive generating parameters.

    Training panels define the screening statistics and the alternative
    truth; each calibration source's first ``specific_truth_rows`` rows
    define that source's specific-source truth.
    """
    if config.dataset_dir:
        ddir = Path(config.dataset_dir)
        training_panels, elements = ingest_csv(ddir / "training.csv")
        calibration_panels, elements_c = ingest_csv(ddir / "calibration.csv")
        if elements != elements_c:
            raise ConfigError("training and calibration files disagree on elements")
    else:
        training_panels, calibration_panels, elements = synth_nfi_panels(config.synthetic_seed)

    candidates = [e for e in SCREENING_ELEMENTS if e in elements]
    if len(candidates) >= config.p:
        cand_idx = np.array([elements.index(e) for e in candidates])
    else:
        cand_idx = np.arange(len(elements))
    table = np.vstack([pnl.rows for pnl in training_panels])[:, cand_idx]
    within = select_elements(table, config.p)
    selected = cand_idx[within]
    names = tuple(elements[j] for j in selected)

    training = AlternativeDataset(
        tuple(MeasurementPanel(pnl.source_id, pnl.rows[:, selected]) for pnl in training_panels)
    )
    calibration = tuple(
        MeasurementPanel(pnl.source_id, pnl.rows[:, selected]) for pnl in calibration_panels
    )

    mu_hat, bbt_hat, cct_hat = estimate_alt_params(training)
    alt_params = AlternativeParams(
        mu_hat,
        chol_with_jitter(bbt_hat),
        chol_with_jitter(cct_hat),
        tau=config.engines.tau,
    )
    specific_params = []
    for pnl in calibration:
        rows = pnl.rows[: config.specific_truth_rows]
        try:
            mu_s, aat = estimate_specific_params(MeasurementPanel(pnl.source_id, rows))
            specific_params.append(SpecificParams(mu_s, chol_with_jitter(aat)))
        except (NotPositiveDefinite, FidsourceError):
            continue  # skip degenerate calibration sources
    if not specific_params:
        raise ConfigError("no usable calibration sources for specific-source truths")
    return DesignTruth(
        alt_params=alt_params,
        specific_params=tuple(specific_params),
        selected_columns=tuple(int(j) for j in selected),
        selected_names=names,
        training=training,
        calibration=calibration,
        summaries=(mu_hat, bbt_hat, cct_hat),
    )


def _draw_trial_data(config, truth, rng, truth_label):
    """Fresh panels for one trial, per the design's generating recipe."""
    meta = {}
    if config.design_id in (1, 2):
        alt_data = generate_alternative(truth.alt_params, config.n, config.m_i, rng)
        spec_idx = int(rng.integers(len(truth.specific_params)))
        params_s = truth.specific_params[spec_idx]
        spec_rows = generate_specific(params_s, config.m, rng).rows
        if truth_label == "H_p":
            unknown_rows = generate_specific(params_s, config.m_u, rng).rows
        else:
            new_source = generate_alternative(truth.alt_params, 1, config.m_u, rng)
            unknown_rows = new_source.sources[0].rows
        meta["specific_source"] = spec_idx
    else:
        alt_data = truth.training
        n_cal = len(truth.calibration)
        spec_idx = int(rng.integers(n_cal))
        panel = truth.calibration[spec_idx]
        spec_rows = panel.rows[: config.m]
        if truth_label == "H_p":
            unknown_rows = panel.rows[config.m : config.m + config.m_u]
        else:
            u_idx = int(rng.integers(n_cal))
            while u_idx == spec_idx:
                u_idx = int(rng.integers(n_cal))
            upanel = truth.calibration[u_idx]
            unknown_rows = upanel.rows[config.m : config.m + config.m_u]
            meta["unknown_source"] = u_idx
        meta["specific_source"] = spec_idx
    return alt_data, np.atleast_2d(spec_rows), np.atleast_2d(unknown_rows), meta


def run_trial(config, truth, trial_id):
    """Run all four engines on one freshly drawn case."""
    seed = derive_trial_seed(config.master_seed, trial_id)
    rng = np.random.default_rng(seed)
    truth_label = "H_p" if trial_id < config.n_hp_trials else "H_d"
    subseeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=6)]
    alt_data, spec_rows, unknown_rows, meta = _draw_trial_data(config, truth, rng, truth_label)
    es = config.engines

    values = {}
    failures = {}
    timings = {}

    mu_hat, bbt_hat, cct_hat = estimate_alt_params(alt_data)

    t0 = time.perf_counter()
    try:
        chain_s = sample_gf_specific(
            spec_rows, ChainConfig(es.gf_n_iter, es.gf_burn_in, seed=subseeds[0])
        )
        b_hat = chol_with_jitter(bbt_hat)
        t_hats = estimate_t_hats(alt_data, mu_hat, b_hat, cct_hat)
        chain_a = sample_gf_alternative(
            alt_data,
            t_hats,
            ChainConfig(es.alt_n_iter, es.alt_burn_in, seed=subseeds[1]),
            tau=es.tau,
        )
        res = compute_gff(
            chain_s,
            chain_a,
            unknown_rows,
            n_importance=es.n_importance,
            rng=np.random.default_rng(subseeds[2]),
            pool_importance=es.pool_importance,
            denominator_thin=es.denominator_thin,
        )
        values["gff"] = res.log10_gff
    except FidsourceError as exc:
        failures["gff"] = f"{type(exc).__name__}: {exc}"
    timings["gff"] = time.perf_counter() - t0

    case = CaseBundle(
        MeasurementPanel("specific", spec_rows),
        MeasurementPanel("unknown", unknown_rows),
        alt_data,
        truth=truth_label,
    )
    for flavor, key, sub in (("prosecution", "bf_p", 3), ("defense", "bf_d", 4)):
        t0 = time.perf_counter()
        try:
            prior = prior_preset(flavor, mu_hat, bbt_hat, cct_hat)
            res = compute_bf(
                case, prior, ChainConfig(es.gibbs_sweeps, es.gibbs_burn_in, seed=subseeds[sub])
            )
            values[key] = res.log10_bf
        except FidsourceError as exc:
            failures[key] = f"{type(exc).__name__}: {exc}"
        timings[key] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lr = compute_lr_arrays(spec_rows, unknown_rows, alt_data)
    if lr.failed:
        failures["lr"] = lr.reason
    else:
        values["lr"] = lr.log10_lr
    timings["lr"] = time.perf_counter() - t0

    return TrialResult(
        trial_id=trial_id,
        truth=truth_label,
        seed=f"{seed:032x}",
        log10_gff=values.get("gff"),
        log10_bf_p=values.get("bf_p"),
        log10_bf_d=values.get("bf_d"),
        log10_lr=values.get("lr"),
        failures=failures,
        timings=timings,
        meta=meta,
    )


def _record_line(result):
    return json.dumps(result.to_record(), sort_keys=True, separators=(",", ":"))


def run_design(config, progress=None):
    """Execute every trial of a design; returns (results, manifest).

    With an output directory, appends one deterministic JSON line per trial
    to results.jsonl (wall times go to timings.jsonl) and resumes by
    trial_id when rerun over a partial table.  The full run is a pure
    function of (config, master_seed, dataset).
    """
    config.validate()
    truth = prepare_design_truth(config)
    outdir = Path(config.outdir) if config.outdir else None
    done = {}
    results_path = timings_path = None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
        config_path = outdir / "config.json"
        if config_path.exists():
            existing = json.loads(config_path.read_text())
            if existing != config.to_dict():
                raise ConfigError(f"{config_path} disagrees with the requested run")
        else:
            config.to_file(config_path)
        results_path = outdir / "results.jsonl"
        timings_path = outdir / "timings.jsonl"
        if results_path.exists():
            for line in results_path.read_text().splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                done[rec["trial_id"]] = TrialResult.from_record(rec)

    results = []
    started = time.perf_counter()
    for trial_id in range(config.n_trials):
        if trial_id in done:
            results.append(done[trial_id])
            continue
        result = run_trial(config, truth, trial_id)
        results.append(result)
        if results_path:
            with results_path.open("a", encoding="utf-8") as fh:
                fh.write(_record_line(result) + "\n")
            with timings_path.open("a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {"trial_id": result.trial_id, "timings": result.timings},
                        sort_keys=True,
                    )
                    + "\n"
                )
        if progress:
            progress(result)

    manifest = {
        "package_version": PACKAGE_VERSION,
        "config": config.to_dict(),
        "selected_columns": list(truth.selected_columns),
        "selected_elements": list(truth.selected_names),
        "n_trials": config.n_trials,
        "n_hp": config.n_hp_trials,
        "n_hd": config.n_hd_trials,
        "trial_seeds": [f"{derive_trial_seed(config.master_seed, t):032x}" for t in range(config.n_trials)],
        "failed_trials": sorted(r.trial_id for r in results if r.any_failure),
        "failure_reasons": {
            str(r.trial_id): dict(sorted(r.failures.items())) for r in results if r.any_failure
        },
    }
    if outdir:
        (outdir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
        (outdir / "runtime.json").write_text(
            json.dumps({"wall_seconds": time.perf_counter() - started}) + "\n"
        )
    return results, manifest


def load_results(path):
    """Read a results.jsonl table back into TrialResult objects."""
    results = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            results.append(TrialResult.from_record(json.loads(line)))
    return sorted(results, key=lambda r: r.trial_id)


def pairwise_complete(results):
    """Drop every trial with any engine failure (seed-level deletion),
    so diagnostics compare all methods on the same cases."""
    return [r for r in results if not r.any_failure]


def score_batches(results):
    """Per-method score batches from failure-free trials."""
    complete = pairwise_complete(results)
    batches = {}
    for method in METHODS:
        hp = [r.value(method) for r in complete if r.truth == "H_p"]
        hd = [r.value(method) for r in complete if r.truth == "H_d"]
        batches[method] = ScoreBatch(np.array(hp, float), np.array(hd, float), method)
    return batches


def _boxplot_rows(method, truth_label, scores):
    q1, med, q3 = np.quantile(scores, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = scores[(scores >= lo_fence) & (scores <= hi_fence)]
    return [
        method,
        truth_label,
        scores.size,
        repr(float(q1)),
        repr(float(med)),
        repr(float(q3)),
        repr(float(inside.min())),
        repr(float(inside.max())),
        int(np.sum((scores < lo_fence) | (scores > hi_fence))),
    ]


def emit_plot_data(results, kind, outdir, seed=0, n_resamples=500):
    """Write tidy CSV plot data; returns the list of written paths.

    Kinds: 'boxplot' (per-method quantiles with outliers flagged), 'auc'
    (point estimates plus bootstrap distribution), 'calibration'
    (discrepancy curves), 'ece' (cross-entropy curves).
    """
    import csv as _csv

    complete = pairwise_complete(results)
    if not complete:
        raise EmptyResults("no failure-free trials to plot")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    batches = score_batches(results)
    written = []

    if kind == "boxplot":
        path = outdir / "boxplot.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(
                ["method", "truth", "n", "q1", "median", "q3", "whisker_lo", "whisker_hi", "n_outliers"]
            )
            for method, batch in batches.items():
                writer.writerow(_boxplot_rows(method, "H_p", batch.hp_scores))
                writer.writerow(_boxplot_rows(method, "H_d", batch.hd_scores))
        written.append(path)
    elif kind == "auc":
        summary = outdir / "auc_summary.csv"
        samples = outdir / "auc_resamples.csv"
        with summary.open("w", newline="", encoding="utf-8") as fh, samples.open(
            "w", newline="", encoding="utf-8"
        ) as fh2:
            w1 = _csv.writer(fh)
            w2 = _csv.writer(fh2)
            w1.writerow(["method", "auc", "q05", "q50", "q95"])
            w2.writerow(["method", "resample", "auc"])
            for method, batch in batches.items():
                rng = np.random.default_rng([seed, METHODS.index(method)])
                dist = auc_distribution(batch, n_resamples, rng)
                q05, q50, q95 = np.quantile(dist, [0.05, 0.5, 0.95])
                w1.writerow(
                    [method, repr(empirical_auc(batch)), repr(float(q05)), repr(float(q50)), repr(float(q95))]
                )
                for i, v in enumerate(dist):
                    w2.writerow([method, i, repr(float(v))])
        written.extend([summary, samples])
    elif kind == "calibration":
        for method, batch in batches.items():
            curve = calibration_discrepancy(batch, rng=np.random.default_rng([seed, 1]))
            written.append(curve.to_csv(outdir / f"calibration_{method}.csv"))
    elif kind == "ece":
        for method, batch in batches.items():
            written.append(ece_curve(batch).to_csv(outdir / f"ece_{method}.csv"))
    else:
        raise ConfigError(f"unknown plot kind {kind!r}")
    return written


def evaluate_case(case, engines=None, seed=0, methods=METHODS):
    """Run the selected engines on one case bundle; returns method -> record."""
    es = engines or DESK_ENGINES
    rng = np.random.default_rng(seed)
    subseeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=6)]
    mu_hat, bbt_hat, cct_hat = estimate_alt_params(case.alternative)
    out = {}
    if "gff" in methods:
        chain_s = sample_gf_specific(
            case.specific, ChainConfig(es.gf_n_iter, es.gf_burn_in, seed=subseeds[0])
        )
        b_hat = chol_with_jitter(bbt_hat)
        t_hats = estimate_t_hats(case.alternative, mu_hat, b_hat, cct_hat)
        chain_a = sample_gf_alternative(
            case.alternative,
            t_hats,
            ChainConfig(es.alt_n_iter, es.alt_burn_in, seed=subseeds[1]),
            tau=es.tau,
        )
        out["gff"] = compute_gff(
            chain_s,
            chain_a,
            case.unknown,
            n_importance=es.n_importance,
            rng=np.random.default_rng(subseeds[2]),
            pool_importance=es.pool_importance,
            denominator_thin=es.denominator_thin,
        ).to_dict()
    for flavor, key, sub in (("prosecution", "bf_p", 3), ("defense", "bf_d", 4)):
        if key in methods:
            prior = prior_preset(flavor, mu_hat, bbt_hat, cct_hat)
            out[key] = compute_bf(
                case, prior, ChainConfig(es.gibbs_sweeps, es.gibbs_burn_in, seed=subseeds[sub])
            ).to_dict()
    if "lr" in methods:
        out["lr"] = compute_lr(case).to_dict()
    return out
