"""Steady-state density matrices, quantum Fisher information for B0, sensitivity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .entanglement import check_density
from .ensemble import EnsembleStats, run_ensemble, time_averaged_negativity
from .linalg import hermitian_eigen

STEADY_WINDOW = (100.0, 150.0)
QFI_EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class SteadyStateEstimate:
    rho_ss: np.ndarray
    window_start: float
    window_end: float
    b0: float
    sample_count: int
    master_seed: int | None = None
    n_traj: int | None = None


@dataclass(frozen=True)
class QfiResult:
    f_q: float
    delta: float
    b0: float


def steady_state_density(stats: EnsembleStats, window=STEADY_WINDOW) -> SteadyStateEstimate:
    """Average of |psi><psi| over every trajectory and every sampled time in ``window``."""
    mask = stats.window_mask(window)
    rho = stats.mean_rho[mask].mean(axis=0)
    rho = 0.5 * (rho + rho.conj().T)
    check_density(rho)
    return SteadyStateEstimate(
        rho_ss=rho,
        window_start=float(window[0]),
        window_end=float(window[1]),
        b0=stats.cfg.b0,
        sample_count=int(mask.sum()) * stats.n_traj,
        master_seed=stats.master_seed,
        n_traj=stats.n_traj,
    )


def qfi_from_derivative(rho, drho, formula: str = "printed") -> float:
    """QFI from ``rho`` and its parameter derivative in the eigenbasis of ``rho``.

    ``printed``: 2 sum_ij (l_i - l_j)^2 / (l_i + l_j) |<i|drho|j>|^2, the form
    used for the reference figures.  ``sld``: the symmetric-logarithmic-
    derivative form 2 sum_ij |<i|drho|j>|^2 / (l_i + l_j).  Both agree on pure
    states.  Pairs with l_i + l_j below ``QFI_EIG_FLOOR`` are skipped.
    """
    lam, vecs = hermitian_eigen(rho, 1e-9)
    d = vecs.conj().T @ drho @ vecs
    total = 0.0
    n = len(lam)
    for i in range(n):
        for j in range(n):
            s = lam[i] + lam[j]
            if s < QFI_EIG_FLOOR:
                continue
            w = abs(d[i, j]) ** 2 / s
            if formula == "printed":
                w *= (lam[i] - lam[j]) ** 2
            elif formula != "sld":
                raise ValueError(f"unknown QFI formula {formula!r}")
            total += w
    return max(2.0 * total, 0.0)


def qfi_finite_difference(
    rho_minus: SteadyStateEstimate,
    rho_plus: SteadyStateEstimate,
    delta: float,
    center: SteadyStateEstimate | None = None,
    formula: str = "printed",
) -> QfiResult:
    """Central difference of the steady state in B0, then the QFI at the centre.

    Both ends must come from the same seed, trajectory count and window
    (common random numbers).  Without ``center`` the midpoint of the two ends
    stands in for the central state, which is exact to O(delta^2).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    ends = [rho_minus, rho_plus] + ([center] if center is not None else [])
    keys = {(e.master_seed, e.n_traj, e.window_start, e.window_end) for e in ends}
    if len(keys) != 1:
        raise ValueError("finite-difference states must share seed, trajectory count and window")
    drho = (rho_plus.rho_ss - rho_minus.rho_ss) / (2.0 * delta)
    rho_c = center.rho_ss if center is not None else 0.5 * (rho_plus.rho_ss + rho_minus.rho_ss)
    b0 = center.b0 if center is not None else 0.5 * (rho_plus.b0 + rho_minus.b0)
    return QfiResult(qfi_from_derivative(rho_c, drho, formula), float(delta), float(b0))


def sensitivity(f_q: float, n_measurements: int = 1) -> float:
    """Cramer-Rao bound 1/sqrt(n F_Q) on the smallest detectable change in B0."""
    if not f_q > 0:
        raise ValueError("F_Q must be positive; B0 is not estimable from this state")
    if n_measurements < 1:
        raise ValueError("need at least one measurement")
    return 1.0 / np.sqrt(n_measurements * f_q)


def scaling_prediction(n_bar: float) -> float:
    """Sensitivity gain over shot noise expected for near-Werner states, sqrt(1 + 2 N)."""
    return float(np.sqrt(1.0 + 2.0 * n_bar))


@dataclass(frozen=True)
class QfiPoint:
    b0: float
    f_q: float
    delta: float
    n_traj: int
    window_start: float
    window_end: float
    n_bar: float
    n_bar_sem: float


def closed_loop_qfi(
    cfg: ScenarioConfig,
    b0: float | None = None,
    delta: float = 0.01,
    *,
    n_traj: int | None = None,
    window=STEADY_WINDOW,
    workers: int = 1,
    formula: str = "printed",
) -> QfiPoint:
    """QFI of the closed-loop steady state at ``b0`` from three common-seed ensembles."""
    b0 = cfg.b0 if b0 is None else float(b0)
    n_traj = cfg.n_traj if n_traj is None else int(n_traj)
    runs = {}
    for shift in (-delta, 0.0, delta):
        stats = run_ensemble(cfg.replace(b0=b0 + shift), n_traj, cfg.master_seed, workers=workers)
        runs[shift] = stats
    est = {k: steady_state_density(v, window) for k, v in runs.items()}
    res = qfi_finite_difference(est[-delta], est[delta], delta, center=est[0.0], formula=formula)
    n_bar, sem = time_averaged_negativity(runs[0.0], (0.0, cfg.t_total))
    return QfiPoint(b0, res.f_q, delta, n_traj, float(window[0]), float(window[1]), n_bar, sem)
