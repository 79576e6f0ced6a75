"""Ornstein-Uhlenbeck field fluctuations integrated with Euler-Maruyama."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .streams import seed_stream


@dataclass(frozen=True)
class OuProcess:
    """Current value of one OU process and the stream that drives it.

    The generator is shared (not copied) by the processes returned from
    :func:`ou_step`, so a chain of steps consumes one stream in order.
    """

    value: float
    tau_c: float
    sigma: float
    stream: np.random.Generator


def _check(tau_c: float, sigma: float) -> None:
    if not tau_c > 0:
        raise ValueError(f"tau_c must be positive, got {tau_c}")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")


def ou_init(tau_c: float, sigma: float, seed) -> OuProcess:
    """Start a process from its stationary law Normal(0, sigma^2)."""
    _check(tau_c, sigma)
    stream = seed_stream(seed)
    z = stream.standard_normal()
    return OuProcess(value=sigma * z if sigma > 0 else 0.0, tau_c=tau_c, sigma=sigma, stream=stream)


def ou_increment(value, dt: float, tau_c: float, sigma: float, z):
    """Deterministic part of the Euler-Maruyama update given standard normal draws ``z``."""
    return value - (value / tau_c) * dt + np.sqrt(2.0 * sigma**2 / tau_c) * np.sqrt(dt) * z


def check_step(dt: float, tau_c: float) -> None:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt > tau_c / 5:
        warnings.warn(
            f"OU step dt={dt} is coarse relative to tau_c={tau_c} (dt > tau_c/5)",
            RuntimeWarning,
            stacklevel=3,
        )


def ou_step(p: OuProcess, dt: float) -> OuProcess:
    check_step(dt, p.tau_c)
    z = p.stream.standard_normal()
    return replace(p, value=float(ou_increment(p.value, dt, p.tau_c, p.sigma, z)))
