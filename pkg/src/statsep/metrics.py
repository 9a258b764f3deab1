"""Evaluation metrics: PSNR against a reference field and per-class relative
errors on the statistics vector."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .fields import as_field_values
from .wph import CLASS_NAMES


class ConstantReferenceError(ValueError):
    """PSNR peak is undefined for a constant reference field."""


def psnr(candidate, reference):
    """Peak signal-to-noise ratio in dB, with the peak taken as the
    reference's dynamic range max - min. Identical fields give +inf."""
    c = as_field_values(candidate)
    r = as_field_values(reference)
    if c.shape != r.shape:
        raise ValueError(f"shape mismatch {c.shape} vs {r.shape}")
    peak = float(np.max(r.real) - np.min(r.real))
    if peak == 0.0:
        raise ConstantReferenceError("reference field is constant")
    mse = float(np.mean(np.abs(c - r) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def class_relative_error(candidate, reference, name):
    """||phi_c(candidate) - phi_c(reference)|| / ||phi_c(reference)|| over one
    coefficient class. Both inputs should carry the same normalization."""
    if name not in CLASS_NAMES:
        raise ValueError(f"unknown class {name!r}")
    c = candidate.get(name)
    r = reference.get(name)
    if c.shape != r.shape:
        raise ValueError("coefficient layouts differ")
    denom = float(np.linalg.norm(r))
    if denom == 0.0:
        raise ZeroDivisionError(f"reference class {name} has zero norm")
    return float(np.linalg.norm(c - r)) / denom


def representation_rmse(candidate_vec, reference_vec):
    """Root-mean-square error over representation coefficients."""
    c = np.asarray(candidate_vec)
    r = np.asarray(reference_vec)
    return float(np.sqrt(np.mean(np.abs(c - r) ** 2)))


CSV_COLUMNS = [
    "algorithm",
    "noise_kind",
    "sigma",
    "seed",
    "realization",
    "psnr_db",
    "rmse_repr",
    "rel_err_s11",
    "rel_err_s00",
    "rel_err_s01",
    "rel_err_c01",
]


@dataclass
class EvalReport:
    """One evaluated run; appends as a CSV row with a stable column order."""

    algorithm: str
    noise_kind: str
    sigma: float
    seed: int
    realization: int = 0
    psnr_db: float = math.nan
    rmse_repr: float = math.nan
    rel_err_by_class: dict = field(default_factory=dict)

    def row(self):
        out = [
            self.algorithm,
            self.noise_kind,
            repr(float(self.sigma)),
            self.seed,
            self.realization,
            repr(float(self.psnr_db)),
            repr(float(self.rmse_repr)),
        ]
        for name in CLASS_NAMES:
            out.append(repr(float(self.rel_err_by_class.get(name, math.nan))))
        return out


def append_report(report, path):
    """Append one report row, writing the header on first use."""
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(CSV_COLUMNS)
        writer.writerow(report.row())
