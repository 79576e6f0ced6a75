"""Negativity, the <sz sz> correlation proxy and its linear calibration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .linalg import as_matrix, hermitian_eigen, partial_transpose_a

DENSITY_TOL = 1e-9
EIG_NOISE = 1e-10
MIN_CALIBRATION_SAMPLES = 100
# spread below this is treated as rounding noise
DEGENERATE_STD = 1e-9


class InvalidDensityMatrix(ValueError):
    pass


def check_density(rho, tol: float = DENSITY_TOL) -> np.ndarray:
    rho = as_matrix(rho, 4)
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise InvalidDensityMatrix("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise InvalidDensityMatrix(f"density matrix trace is {tr!r}, expected 1")
    evals, _ = hermitian_eigen(rho, tol)
    if evals[0] < -tol:
        raise InvalidDensityMatrix(f"density matrix has eigenvalue {evals[0]!r} < 0")
    return rho


def negativity(rho) -> float:
    """Half the trace-norm excess of the partial transpose, clamped to [0, 0.5]."""
    rho = check_density(rho)
    lam, _ = hermitian_eigen(partial_transpose_a(rho), DENSITY_TOL)
    n = 0.5 * (np.sum(np.abs(lam)) - 1.0)
    if n < EIG_NOISE:
        return 0.0
    return float(min(n, 0.5))


def negativity_pure(psi):
    """Negativity of normalized pure state(s), shape (4,) or (n, 4).

    For a pure state the partial-transpose spectrum gives N = s0*s1, the
    product of the Schmidt coefficients, which is |det| of the 2x2
    amplitude matrix.
    """
    psi = np.asarray(psi, dtype=complex)
    det = psi[..., 0] * psi[..., 3] - psi[..., 1] * psi[..., 2]
    return np.minimum(np.abs(det), 0.5)


def zz_correlation(psi):
    """Real expectation of sz (x) sz for normalized state(s), shape (4,) or (n, 4)."""
    p = np.abs(np.asarray(psi, dtype=complex)) ** 2
    return p[..., 0] - p[..., 1] - p[..., 2] + p[..., 3]


@dataclass(frozen=True)
class CalibrationFit:
    slope: float
    intercept: float
    pearson_r: float
    sample_count: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "pearson_r": self.pearson_r,
            "sample_count": self.sample_count,
        }


# the fixed linear map, kept as a reference point
REFERENCE_FIT = CalibrationFit(slope=0.83, intercept=-0.12, pearson_r=0.97, sample_count=0)


def estimate_negativity(m, fit: CalibrationFit):
    """Affine proxy ``slope*|m| + intercept`` clamped to the physical range [0, 0.5]."""
    return np.clip(fit.slope * np.abs(m) + fit.intercept, 0.0, 0.5)


def fit_calibration(samples) -> CalibrationFit:
    """Least-squares line of negativity against |<sz sz>| over (m, n) pairs."""
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("samples must be a sequence of (m, n) pairs")
    if len(data) < MIN_CALIBRATION_SAMPLES:
        raise ValueError(
            f"calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {len(data)}"
        )
    x = np.abs(data[:, 0])
    y = data[:, 1]
    dx = x - x.mean()
    dy = y - y.mean()
    if x.std() < DEGENERATE_STD or y.std() < DEGENERATE_STD:
        raise ValueError("degenerate calibration data: zero variance")
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    slope = float(dx @ dy) / sxx
    intercept = float(y.mean() - slope * x.mean())
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return CalibrationFit(slope, intercept, float(np.clip(r, -1.0, 1.0)), len(data))


class ProxyCalibration(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_calibration`.

    ``fit(X, y)`` takes correlation values ``X`` (shape (n,) or (n, 1)) and
    exact negativities ``y``; ``predict`` returns the clamped negativity
    estimate.
    """

    def __init__(self, clip: bool = True):
        self.clip = clip

    def fit(self, X, y):
        m = np.asarray(X, dtype=float).reshape(len(y), -1)[:, 0]
        self.calibration_ = fit_calibration(np.column_stack([m, np.asarray(y, dtype=float)]))
        self.coef_ = np.array([self.calibration_.slope])
        self.intercept_ = self.calibration_.intercept
        return self

    def predict(self, X):
        check_is_fitted(self, "calibration_")
        m = np.asarray(X, dtype=float).reshape(-1)
        if self.clip:
            return estimate_negativity(m, self.calibration_)
        return self.calibration_.slope * np.abs(m) + self.calibration_.intercept
