"""PI controller on the DM strength with conditional-integration anti-windup."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class PiController:
    kp: float = 0.5
    ki: float = 0.1
    target: float = 0.4
    dz0: float = 1.0
    dz_min: float = 0.0
    dz_max: float = 2.0
    integral: float = 0.0
    last_output: float | None = None
    saturated: bool = False

    def __post_init__(self):
        if self.dz_min > self.dz_max:
            raise ValueError("dz_min must not exceed dz_max")
        if self.last_output is None:
            object.__setattr__(self, "last_output", float(np.clip(self.dz0, self.dz_min, self.dz_max)))


def error_signal(n_est, target):
    return target - n_est


def pi_law(integral, e, dt, kp, ki, dz0, dz_min, dz_max):
    """Vectorized PI step. Returns ``(integral, dz, saturated)``.

    The integral accumulates ``e*dt`` only when the resulting output stays
    inside ``[dz_min, dz_max]``; otherwise it is frozen and the output clamped.
    """
    trial = integral + e * dt
    candidate = dz0 + kp * e + ki * trial
    inside = np.logical_and(candidate >= dz_min, candidate <= dz_max)
    new_integral = np.where(inside, trial, integral)
    dz = np.clip(candidate, dz_min, dz_max)
    return new_integral, dz, np.logical_not(inside)


def pi_update(ctrl: PiController, e: float, dt: float) -> tuple[PiController, float]:
    if not dt > 0:
        raise ValueError("dt must be positive")
    integral, dz, sat = pi_law(
        ctrl.integral, e, dt, ctrl.kp, ctrl.ki, ctrl.dz0, ctrl.dz_min, ctrl.dz_max
    )
    dz = float(dz)
    return replace(ctrl, integral=float(integral), last_output=dz, saturated=bool(sat)), dz


class GainSearchResult(NamedTuple):
    kp: float
    ki: float
    mse: float
    table: list  # (kp, ki, mse) rows, ranked best first


def gain_grid_search(
    grid_kp: Sequence[float],
    grid_ki: Sequence[float],
    objective: Callable[[float, float], float],
) -> GainSearchResult:
    """Exhaustive search of ``objective(kp, ki)``; ties go to smaller kp, then smaller ki."""
    if len(grid_kp) == 0 or len(grid_ki) == 0:
        raise ValueError("gain grids must be non-empty")
    rows = [(float(kp), float(ki), float(objective(kp, ki))) for kp, ki in itertools.product(grid_kp, grid_ki)]
    ranked = sorted(rows, key=lambda r: (r[2], r[0], r[1]))
    best = ranked[0]
    return GainSearchResult(best[0], best[1], best[2], ranked)
