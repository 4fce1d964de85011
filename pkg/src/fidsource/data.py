"""Dataset containers, data-generating equations, point estimators, and ingestion.

Measurements are log-transformed element concentrations, one row per glass
fragment, one column per element.  The specific-source model draws rows as
``mu_s + A z`` with standard-normal ``z``; the alternative-source model draws
one heavy-tailed between-source effect per source, ``mu_a + B t_i + C v``,
with ``t_i`` multivariate-T and Gaussian within-source noise ``v``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    InsufficientReplication,
    NonPositiveConcentration,
    NotPositiveDefinite,
    SchemaError,
    SingularDesign,
)
from .kernels import chol_factor

CSV_VERSION_LINE = "# fidsource panels v1"

# Heavy-tail degrees of freedom used wherever a between-source effect is
# drawn and no explicit value is supplied.
DEFAULT_TAU = 5.0


def _check_lower_tri(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got {a.shape}")
    if np.max(np.abs(np.triu(a, 1))) != 0.0:
        raise ValueError(f"{name} must be lower-triangular")
    if np.any(np.diag(a) <= 0):
        raise ValueError(f"{name} must have a strictly positive diagonal")
    return a


@dataclass(frozen=True)
class MeasurementPanel:
    """All measurements from one source: an (s, p) matrix of log concentrations."""

    source_id: str
    rows: np.ndarray

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if rows.shape[0] < 1:
            raise ValueError("panel needs at least one row")
        if not np.all(np.isfinite(rows)):
            raise ValueError(f"panel {self.source_id!r} contains non-finite values")
        object.__setattr__(self, "rows", rows)

    @property
    def n_rows(self):
        return self.rows.shape[0]

    @property
    def dim(self):
        return self.rows.shape[1]

    @property
    def mean(self):
        return self.rows.mean(axis=0)


@dataclass(frozen=True)
class AlternativeDataset:
    """Background population: one panel per source."""

    sources: tuple

    def __post_init__(self):
        sources = tuple(self.sources)
        if len(sources) < 1:
            raise ValueError("alternative dataset needs at least one source")
        dims = {s.dim for s in sources}
        if len(dims) != 1:
            raise ValueError(f"sources disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "sources", sources)

    @property
    def n(self):
        return len(self.sources)

    @property
    def dim(self):
        return self.sources[0].dim

    @property
    def counts(self):
        return np.array([s.n_rows for s in self.sources])

    @property
    def total(self):
        return int(self.counts.sum())

    def stacked(self):
        """All rows stacked, plus the source index of each row."""
        rows = np.vstack([s.rows for s in self.sources])
        idx = np.repeat(np.arange(self.n), self.counts)
        return rows, idx


@dataclass(frozen=True)
class SpecificParams:
    """Specific-source parameters: mean and lower-triangular within factor."""

    mu_s: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu_s", np.asarray(self.mu_s, dtype=float))
        object.__setattr__(self, "A", _check_lower_tri(self.A, "A"))

    @property
    def dim(self):
        return self.mu_s.shape[0]

    @property
    def cov(self):
        return self.A @ self.A.T


@dataclass(frozen=True)
class AlternativeParams:
    """Alternative-source parameters: fixed effect, between and within factors."""

    mu_a: np.ndarray
    B: np.ndarray
    C: np.ndarray
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        object.__setattr__(self, "mu_a", np.asarray(self.mu_a, dtype=float))
        object.__setattr__(self, "B", _check_lower_tri(self.B, "B"))
        object.__setattr__(self, "C", _check_lower_tri(self.C, "C"))
        if not self.tau > 2:
            raise ValueError(f"tau must exceed 2 for a finite effect variance, got {self.tau}")

    @property
    def dim(self):
        return self.mu_a.shape[0]

    @property
    def between_cov(self):
        return self.B @ self.B.T

    @property
    def within_cov(self):
        return self.C @ self.C.T


@dataclass(frozen=True)
class CaseBundle:
    """One identification-of-source case: specific, unknown, and background data."""

    specific: MeasurementPanel
    unknown: MeasurementPanel
    alternative: AlternativeDataset
    truth: str | None = None

    def __post_init__(self):
        dims = {self.specific.dim, self.unknown.dim, self.alternative.dim}
        if len(dims) != 1:
            raise ValueError(f"panels disagree on dimension: {sorted(dims)}")
        if self.truth not in (None, "H_p", "H_d"):
            raise ValueError(f"truth must be 'H_p', 'H_d', or None, got {self.truth!r}")

    @property
    def dim(self):
        return self.specific.dim


# ---------------------------------------------------------------------------
# Data-generating equations


def generate_specific(params, m, rng, z=None, source_id="specific"):
    """Draw m rows mu_s + A z_k with z_k ~ N(0, I).

    ``z`` is a test hook: an (m, p) array of pre-drawn standard normals.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    p = params.dim
    if z is None:
        z = rng.standard_normal((m, p))
    else:
        z = np.asarray(z, dtype=float).reshape(m, p)
    rows = params.mu_s + z @ params.A.T
    return MeasurementPanel(source_id, rows)


def generate_alternative(params, n, m_i, rng, t=None, v=None, id_prefix="alt"):
    """Draw an n-source dataset: per source one t_i ~ T_tau(0, I), then
    m_i rows mu_a + B t_i + C v with Gaussian v.

    ``m_i`` may be a scalar count or a length-n sequence.  ``t`` and ``v``
    are test hooks for pre-drawn effects and noise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    p = params.dim
    counts = np.full(n, m_i, dtype=int) if np.isscalar(m_i) else np.asarray(m_i, dtype=int)
    if counts.shape != (n,) or np.any(counts < 1):
        raise ValueError("m_i must be a positive count or a length-n sequence of them")
    if t is None:
        z = rng.standard_normal((n, p))
        g = rng.chisquare(params.tau, size=n)
        t = z / np.sqrt(g / params.tau)[:, None]
    else:
        t = np.asarray(t, dtype=float).reshape(n, p)
    panels = []
    bt = t @ params.B.T
    for i in range(n):
        if v is None:
            noise = rng.standard_normal((counts[i], p))
        else:
            noise = np.asarray(v[i], dtype=float).reshape(counts[i], p)
        rows = params.mu_a + bt[i] + noise @ params.C.T
        panels.append(MeasurementPanel(f"{id_prefix}-{i:04d}", rows))
    return AlternativeDataset(tuple(panels))


# ---------------------------------------------------------------------------
# Closed-form estimators


def estimate_specific_params(panel):
    """Sample mean and the 1/(m-1)-scaled scatter of one panel."""
    m = panel.n_rows
    if m < 2:
        raise InsufficientReplication(f"need m >= 2 rows, got {m}")
    mu_hat = panel.mean
    dev = panel.rows - mu_hat
    aat_hat = dev.T @ dev / (m - 1)
    return mu_hat, aat_hat


def estimate_alt_params(data):
    """Moment estimators for the alternative-source model.

    Returns (mu_a_hat, BBt_hat, CCt_hat): the grand mean, the
    1/(n-1)-scaled scatter of source means about the grand mean, and the
    1/(N-1)-scaled pooled within-source scatter.  BBt_hat targets the full
    between-source variance of the heavy-tailed effect (tau/(tau-2) times
    the factor Gram matrix under a T effect), not the factor itself.
    """
    n = data.n
    if n < 2:
        raise InsufficientReplication(f"need n >= 2 sources, got {n}")
    counts = data.counts
    total = data.total
    if total - 1 <= 0 or np.any(counts < 2):
        raise InsufficientReplication("every source needs m_i >= 2 for the within-source scatter")
    rows, idx = data.stacked()
    mu_hat = rows.mean(axis=0)
    means = np.vstack([s.mean for s in data.sources])
    dev_b = means - mu_hat
    bbt_hat = dev_b.T @ dev_b / (n - 1)
    dev_w = rows - means[idx]
    cct_hat = dev_w.T @ dev_w / (total - 1)
    return mu_hat, bbt_hat, cct_hat


def estimate_t_hats(data, mu_a_hat, b_hat, cct_hat):
    """Least-squares plug-in effects: one p-vector per source.

    Solves the generalized normal equations
    (B' (CC')^-1 B) t_i = B' (CC')^-1 (ybar_i - mu_a) for each source.
    """
    b_hat = np.asarray(b_hat, dtype=float)
    cct_inv_b = np.linalg.solve(cct_hat, b_hat)
    normal = b_hat.T @ cct_inv_b
    try:
        normal_chol = chol_factor(normal)
    except NotPositiveDefinite as exc:
        raise SingularDesign("B'(CC')^-1 B is singular") from exc
    means = np.vstack([s.mean for s in data.sources])
    rhs = (means - mu_a_hat) @ cct_inv_b  # (n, p)
    z = np.linalg.solve(normal_chol, rhs.T)
    return np.linalg.solve(normal_chol.T, z).T


# ---------------------------------------------------------------------------
# Element screening


def select_elements(table, p):
    """Indices of the p highest-variation columns after unit-norm rescaling.

    Each column is divided by its Euclidean norm over all rows, its sample
    standard deviation is computed, and the p largest-SD columns win; ties
    break toward the lower original column index.  Returns indices in
    original column order.
    """
    table = np.asarray(table, dtype=float)
    q = table.shape[1]
    if q < p:
        raise ValueError(f"cannot select {p} of {q} columns")
    norms = np.linalg.norm(table, axis=0)
    norms[norms == 0] = 1.0
    sds = np.std(table / norms, axis=0, ddof=1)
    # stable sort on -sd keeps original order among ties
    ranked = np.argsort(-sds, kind="stable")
    return np.sort(ranked[:p])


def preprocess_select_elements(panels, p):
    """Screen a panel collection down to its p highest-variation elements.

    The unit-norm rescaling is used for ranking only; the reduced panels
    keep the original log-concentration values of the selected columns.
    Returns (selected column indices, reduced panels).
    """
    table = np.vstack([panel.rows for panel in panels])
    idx = select_elements(table, p)
    reduced = [MeasurementPanel(panel.source_id, panel.rows[:, idx]) for panel in panels]
    return idx, reduced


# ---------------------------------------------------------------------------
# CSV ingestion / export
#
# Schema (one line per fragment, UTF-8, comma separator, '.' decimal point):
#   optional first line:  "# fidsource panels v1"
#   header:               source_id,fragment_id,<element_1>,...,<element_q>
#   rows:                 string,string,float,...,float
# Values are log-transformed concentrations unless log_transform=True, in
# which case raw concentrations are validated positive and logged on read.


def ingest_csv(path, log_transform=False):
    """Read panels grouped by source_id.  Returns (panels, element_names).

    Raises SchemaError naming the offending row/column on malformed input,
    and NonPositiveConcentration when a log transform hits a value <= 0.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if header and header[0].startswith("#"):
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: version line but no header") from None
        if len(header) < 3 or header[0] != "source_id" or header[1] != "fragment_id":
            raise SchemaError(
                f"{path}: header must start 'source_id,fragment_id,<elements...>', got {header[:3]}"
            )
        elements = header[2:]
        by_source = {}
        order = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            sid = row[0]
            vals = []
            for j, cell in enumerate(row[2:], start=3):
                if cell.strip() == "":
                    raise SchemaError(
                        f"{path}:{lineno}: missing value in column {j} ({elements[j - 3]})"
                    )
                try:
                    x = float(cell)
                except ValueError:
                    raise SchemaError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {j}"
                    ) from None
                if log_transform:
                    if x <= 0:
                        raise NonPositiveConcentration(
                            f"{path}:{lineno}: cannot log-transform {x} in column {j}"
                        )
                    x = np.log(x)
                vals.append(x)
            if sid not in by_source:
                by_source[sid] = []
                order.append(sid)
            by_source[sid].append(vals)
    panels = [MeasurementPanel(sid, np.array(by_source[sid])) for sid in order]
    return panels, elements


def export_csv(panels, elements, path):
    """Write panels in the documented schema (values as read, no transform)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        fh.write(CSV_VERSION_LINE + "\n")
        writer.writerow(["source_id", "fragment_id"] + list(elements))
        for panel in panels:
            for k, row in enumerate(panel.rows):
                writer.writerow([panel.source_id, f"f{k + 1}"] + [repr(float(v)) for v in row])
    return path
