"""Synthetic glass-panel fixtures mirroring the casework database layout.

The real forensic database is request-only, so simulations and tests run on
a synthetic stand-in with the same shape: 659 training sources with three
fragments each and 320 calibration sources with five fragments each, 18
elements per fragment, log-concentration scale.  Two designated elements
carry clearly the largest relative variation so the screening step has an
unambiguous winner pair.
"""

from __future__ import annotations

import numpy as np

from .data import AlternativeParams, export_csv, generate_alternative
from .kernels import chol_factor

# Ten elements eligible for screening plus eight more carried in the files.
SCREENING_ELEMENTS = (
    "Ti49",
    "Sr88",
    "K39",
    "Zr90",
    "Mn55",
    "Ba137",
    "Ce140",
    "La139",
    "Pb208",
    "Rb85",
)
EXTRA_ELEMENTS = ("Li7", "Na23", "Mg25", "Al27", "Ca42", "Fe57", "Ga69", "Sn118")
ALL_ELEMENTS = EXTRA_ELEMENTS[:4] + SCREENING_ELEMENTS[:5] + EXTRA_ELEMENTS[4:] + SCREENING_ELEMENTS[5:]

N_TRAINING = 659
N_CALIBRATION = 320
TRAINING_FRAGMENTS = 3
CALIBRATION_FRAGMENTS = 5


def synth_element_params(seed):
    """Population parameters over all 18 elements.

    Log-concentration levels sit in [2, 9]; relative variation is a fraction
    of a percent per element, with the designated pair ('Pb208', 'Rb85')
    three times above the rest so unit-norm screening selects them.  The
    between-source factor dominates the within-source factor roughly 4:1.
    """
    rng = np.random.default_rng(seed)
    q = len(ALL_ELEMENTS)
    levels = rng.uniform(2.0, 9.0, size=q)
    rel = rng.uniform(0.002, 0.004, size=q)
    rel[ALL_ELEMENTS.index("Pb208")] = 0.012
    rel[ALL_ELEMENTS.index("Rb85")] = 0.013
    between_sd = 0.95 * rel * levels
    within_sd = 0.25 * rel * levels

    # Mild exchangeable correlation between elements, stronger for the
    # between-source effect than for instrument-level noise.
    corr_b = 0.7 * np.eye(q) + 0.3 * np.ones((q, q))
    corr_w = 0.85 * np.eye(q) + 0.15 * np.ones((q, q))
    cov_b = np.outer(between_sd, between_sd) * corr_b
    cov_w = np.outer(within_sd, within_sd) * corr_w
    return AlternativeParams(levels, chol_factor(cov_b), chol_factor(cov_w), tau=5.0)


def synth_nfi_panels(seed):
    """Generate (training, calibration, element names) with the casework layout."""
    params = synth_element_params(seed)
    rng = np.random.default_rng([seed, 0xF1D])
    training = generate_alternative(
        params, N_TRAINING, TRAINING_FRAGMENTS, rng, id_prefix="train"
    )
    calibration = generate_alternative(
        params, N_CALIBRATION, CALIBRATION_FRAGMENTS, rng, id_prefix="calib"
    )
    return list(training.sources), list(calibration.sources), list(ALL_ELEMENTS)


def write_synth_nfi_csv(directory, seed):
    """Write training.csv and calibration.csv fixtures; returns their paths."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    training, calibration, elements = synth_nfi_panels(seed)
    train_path = export_csv(training, elements, directory / "training.csv")
    calib_path = export_csv(calibration, elements, directory / "calibration.csv")
    return train_path, calib_path
