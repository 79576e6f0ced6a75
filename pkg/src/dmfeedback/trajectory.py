"""Monte Carlo wavefunction propagation with in-loop PI feedback on D_z.

One step of the closed loop, in order:

1. read ``<sz sz>`` from the current state and form the negativity estimate,
2. update ``D_z`` with the PI law (skipped when feedback is off),
3. rebuild ``H`` from the new ``D_z`` and the current field fluctuations,
4. advance both OU processes, draw one uniform ``r``; if ``r`` falls below
   the total jump probability apply the selected jump operator, otherwise
   propagate with the no-jump evolution; renormalize.

The no-jump evolution is either the exact short-time propagator
``exp(-i H_eff dt)`` (``method="expm"``, default) or the literal first-order
step ``(1 - i H_eff dt)`` (``method="euler"``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numba
import numpy as np

from . import streams
from .config import ScenarioConfig
from .control import PiController, pi_law
from .entanglement import CalibrationFit, estimate_negativity, zz_correlation
from .linalg import normalize
from .model import DM_Z, ZA, ZB, build_hamiltonian_batch, exchange_term, initial_state, pauli_op
from .noise import OuProcess, check_step, ou_increment, ou_init


class TrajectoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecoherenceRates:
    gamma1: float = 0.01
    gamma2: float = 0.01


@dataclass(frozen=True)
class JumpChannel:
    name: str
    operator: np.ndarray
    rate: float


def jump_channels(rates: DecoherenceRates) -> list[JumpChannel]:
    """Amplitude damping then dephasing, qubit a before qubit b."""
    return [
        JumpChannel("damp_a", pauli_op("minus", "a"), rates.gamma1),
        JumpChannel("damp_b", pauli_op("minus", "b"), rates.gamma1),
        JumpChannel("dephase_a", pauli_op("z", "a"), rates.gamma2),
        JumpChannel("dephase_b", pauli_op("z", "b"), rates.gamma2),
    ]


def decay_operator(channels) -> np.ndarray:
    out = np.zeros((4, 4), dtype=complex)
    for ch in channels:
        out += ch.rate * (ch.operator.conj().T @ ch.operator)
    return out


def effective_hamiltonian(h, channels) -> np.ndarray:
    return np.asarray(h, dtype=complex) - 0.5j * decay_operator(channels)


def deterministic_step(psi, h_eff, dt: float) -> tuple[np.ndarray, float]:
    """First-order no-jump step ``(1 - i H_eff dt) psi``; returns it with its squared norm."""
    psi = np.asarray(psi, dtype=complex)
    out = psi - 1j * dt * (np.asarray(h_eff) @ psi)
    return out, float(np.vdot(out, out).real)


def jump_probabilities(psi, channels, dt: float) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    p = np.array(
        [ch.rate * dt * np.vdot(psi, ch.operator.conj().T @ (ch.operator @ psi)).real for ch in channels]
    )
    return np.maximum(p, 0.0)


def apply_jump(psi, channel: JumpChannel) -> np.ndarray:
    out = channel.operator @ np.asarray(psi, dtype=complex)
    if np.linalg.norm(out) == 0.0:
        raise TrajectoryError(f"jump {channel.name} annihilates the state")
    return normalize(out)


# ---------------------------------------------------------------------------
# vectorized kernels shared by the single-trajectory API and the ensemble

_BLOCKS = (np.array([0, 3]), np.array([1, 2]))


def _is_block_structured(m: np.ndarray) -> bool:
    mask = np.ones((4, 4), dtype=bool)
    for idx in _BLOCKS:
        mask[np.ix_(idx, idx)] = False
    return not np.any(np.abs(m[..., mask]) > 0.0)


def _expm2_entries(a, b, c, d):
    """exp of 2x2 matrices given entrywise, exp(m) = e^mu [cosh s I + sinh(s)/s (m - mu I)]."""
    mu = 0.5 * (a + d)
    h = 0.5 * (a - d)
    s2 = h * h + b * c
    if np.max(np.abs(s2), initial=0.0) <= 1e-2:
        # cosh(s) and sinh(s)/s as power series in s^2; truncation error < 1e-16
        cosh = 1.0 + s2 * (1 / 2 + s2 * (1 / 24 + s2 * (1 / 720 + s2 * (1 / 40320 + s2 / 3628800))))
        sinhc = 1.0 + s2 * (1 / 6 + s2 * (1 / 120 + s2 * (1 / 5040 + s2 * (1 / 362880 + s2 / 39916800))))
    else:
        s = np.sqrt(s2)
        small = np.abs(s) < 1e-6
        safe = np.where(small, 1.0, s)
        sinhc = np.where(small, 1.0 + s2 / 6.0 + s2 * s2 / 120.0, np.sinh(safe) / safe)
        cosh = np.where(small, 1.0 + s2 / 2.0 + s2 * s2 / 24.0, np.cosh(safe))
    e = np.exp(mu)
    es = e * sinhc
    return e * cosh + es * h, es * b, es * c, e * cosh - es * h


def propagator(h_eff, dt: float, method: str = "expm") -> np.ndarray:
    """No-jump propagator for a single ``h_eff`` or a stack of shape (n, 4, 4)."""
    h = np.asarray(h_eff, dtype=complex)
    single = h.ndim == 2
    m = -1j * dt * h.reshape(-1, 4, 4)
    if method == "euler":
        out = np.eye(4, dtype=complex)[None] + m
    elif method == "expm":
        if _is_block_structured(m):
            out = np.zeros_like(m)
            for i, j in _BLOCKS:
                u = _expm2_entries(m[:, i, i], m[:, i, j], m[:, j, i], m[:, j, j])
                out[:, i, i], out[:, i, j], out[:, j, i], out[:, j, j] = u
        else:
            from scipy.linalg import expm

            out = expm(m)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out[0] if single else out


@numba.njit(cache=True)
def _propagate_blocks(psi, terms, b_a, b_b, dz, euler):
    """Apply the block-diagonal no-jump propagator row by row.

    ``terms[blk, p, q]`` holds the (const, B_a, B_b, D_z) coefficients of
    entry (p, q) of ``-i dt H_eff`` restricted to block ``blk``.
    """
    n = psi.shape[0]
    out = np.empty_like(psi)
    m = np.empty((2, 2), dtype=np.complex128)
    for row in range(n):
        for blk in range(2):
            i = 0 if blk == 0 else 1
            j = 3 if blk == 0 else 2
            for p in range(2):
                for q in range(2):
                    t = terms[blk, p, q]
                    m[p, q] = t[0] + t[1] * b_a[row] + t[2] * b_b[row] + t[3] * dz[row]
            a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
            if euler:
                u00, u01, u10, u11 = 1.0 + a, b, c, 1.0 + d
            else:
                mu = 0.5 * (a + d)
                h = 0.5 * (a - d)
                s2 = h * h + b * c
                if abs(s2) <= 1e-2:
                    cosh = 1.0 + s2 * (1 / 2 + s2 * (1 / 24 + s2 * (1 / 720 + s2 * (1 / 40320 + s2 / 3628800))))
                    sinhc = 1.0 + s2 * (1 / 6 + s2 * (1 / 120 + s2 * (1 / 5040 + s2 * (1 / 362880 + s2 / 39916800))))
                else:
                    s = np.sqrt(s2)
                    cosh = np.cosh(s)
                    sinhc = np.sinh(s) / s
                e = np.exp(mu)
                es = e * sinhc
                u00 = e * cosh + es * h
                u01 = es * b
                u10 = es * c
                u11 = e * cosh - es * h
            pi = psi[row, i]
            pj = psi[row, j]
            out[row, i] = u00 * pi + u01 * pj
            out[row, j] = u10 * pi + u11 * pj
    return out


class LoopKernel:
    """Constant operators of one scenario plus the vectorized closed-loop step.

    ``-i dt H_eff`` is affine in (B_a, B_b, D_z).  When every piece of it is
    block diagonal on {|00>,|11>} and {|01>,|10>} (true for the Heisenberg +
    z-field + z-DM model with these jump operators) the propagator is built
    from closed-form 2x2 exponentials; otherwise the 4x4 path is used.
    """

    def __init__(self, cfg: ScenarioConfig, fit: CalibrationFit | None):
        self.cfg = cfg
        self.fit = fit
        if cfg.feedback and fit is None:
            raise ValueError("feedback requires a calibration fit")
        self.j = cfg.couplings
        self.channels = jump_channels(DecoherenceRates(cfg.gamma1, cfg.gamma2))
        self.ops = np.array([ch.operator for ch in self.channels])
        self.decay = decay_operator(self.channels)
        ldl = np.array([ch.rate * ch.operator.conj().T @ ch.operator for ch in self.channels])
        self.ldl = ldl
        # rate * <L^dag L> is linear in |psi_i|^2 when every L^dag L is diagonal
        self.diag_decay = all(not np.any(x - np.diag(np.diag(x))) for x in ldl)
        self.ldl_diag = np.ascontiguousarray(np.real(np.array([np.diag(x) for x in ldl])).T)
        check_step(cfg.dt, cfg.tau_c)

        dt = cfg.dt
        pieces = [
            -1j * dt * (exchange_term(self.j) - 0.5j * self.decay),
            -1j * dt * 0.5 * ZA,
            -1j * dt * 0.5 * ZB,
            -1j * dt * 0.25 * DM_Z,
        ]
        self.blockwise = all(_is_block_structured(p[None]) for p in pieces)
        self.block_terms = np.array(
            [[[[piece[p, q] for piece in pieces] for q in (i, j)] for p in (i, j)] for i, j in _BLOCKS],
            dtype=complex,
        )

    def no_jump(self, psi, b_a, b_b, dz):
        cfg = self.cfg
        if not self.blockwise:
            h = build_hamiltonian_batch(self.j, b_a, b_b, np.broadcast_to(dz, b_a.shape))
            u = propagator(h - 0.5j * self.decay[None], cfg.dt, cfg.method)
            return np.einsum("nij,nj->ni", u, psi)
        n = len(psi)
        dz = np.broadcast_to(np.asarray(dz, dtype=float), (n,))
        return _propagate_blocks(
            np.ascontiguousarray(psi), self.block_terms,
            np.ascontiguousarray(b_a, dtype=float), np.ascontiguousarray(b_b, dtype=float),
            np.ascontiguousarray(dz), cfg.method == "euler",
        )

    def jump_probabilities(self, psi) -> np.ndarray:
        """Per-channel jump probabilities for one step, shape (n, n_channels)."""
        if self.diag_decay:
            p = self.cfg.dt * ((psi.real**2 + psi.imag**2) @ self.ldl_diag)
        else:
            p = self.cfg.dt * np.einsum("ni,kij,nj->nk", psi.conj(), self.ldl, psi).real
        return np.maximum(p, 0.0)

    def step(self, psi, da, db, integral, dz, z_a, z_b, r, choose=None):
        """Advance arrays of trajectories by one dt.

        The jump channel is the first ``k`` with cumsum(p)[k] >= r, or none
        when ``r`` exceeds the total.  ``choose(p)`` replaces that rule: it
        gets the per-channel probabilities and returns channel indices, -1
        for no jump.

        Returns ``(psi, da, db, integral, dz, saturated, jumped, p)``.
        """
        cfg = self.cfg
        dt = cfg.dt
        saturated = np.zeros(len(psi), dtype=bool)
        if cfg.feedback:
            m = zz_correlation(psi)
            e = cfg.target - estimate_negativity(m, self.fit)
            integral, dz, saturated = pi_law(integral, e, dt, cfg.kp, cfg.ki, cfg.dz0, cfg.dz_min, cfg.dz_max)
        b_a = cfg.b0 + da
        b_b = cfg.b0 + db
        da = ou_increment(da, dt, cfg.tau_c, cfg.sigma, z_a)
        db = ou_increment(db, dt, cfg.tau_c, cfg.sigma, z_b)

        p = self.jump_probabilities(psi)
        if choose is None:
            cum = np.cumsum(p, axis=1)
            channel = np.where(r < cum[:, -1], np.argmax(cum >= r[:, None], axis=1), -1)
        else:
            channel = choose(p)
        jumped = channel >= 0

        new = self.no_jump(psi, b_a, b_b, dz)
        if jumped.any():
            rows = np.nonzero(jumped)[0]
            new[rows] = np.einsum("nij,nj->ni", self.ops[channel[rows]], psi[rows])
        norm = np.sqrt(np.sum(new.real**2 + new.imag**2, axis=1))
        if np.any(norm == 0.0):
            raise TrajectoryError("state collapsed to zero norm")
        return new / norm[:, None], da, db, integral, dz, saturated, jumped, p


# ---------------------------------------------------------------------------
# single-trajectory API


@dataclass(frozen=True)
class TrajectoryState:
    psi: np.ndarray
    t: float
    ou_a: OuProcess
    ou_b: OuProcess
    controller: PiController
    dz: float
    jump_stream: np.random.Generator
    steps: int = 0
    jumps: int = 0


def init_trajectory(cfg: ScenarioConfig, index: int = 0, master_seed: int | None = None) -> TrajectoryState:
    seed = cfg.master_seed if master_seed is None else master_seed
    ou_a = ou_init(cfg.tau_c, cfg.sigma, streams.make_stream(seed, index, streams.OU_A))
    ou_b = ou_init(cfg.tau_c, cfg.sigma, streams.make_stream(seed, index, streams.OU_B))
    ctrl = cfg.controller()
    return TrajectoryState(
        psi=initial_state(cfg.alpha),
        t=0.0,
        ou_a=ou_a,
        ou_b=ou_b,
        controller=ctrl,
        dz=ctrl.last_output,
        jump_stream=streams.make_stream(seed, index, streams.JUMPS),
    )


def step_closed_loop(
    s: TrajectoryState, cfg: ScenarioConfig, fit: CalibrationFit | None = None, kernel: LoopKernel | None = None
) -> TrajectoryState:
    kernel = kernel or LoopKernel(cfg, fit)
    z_a = s.ou_a.stream.standard_normal()
    z_b = s.ou_b.stream.standard_normal()
    r = s.jump_stream.random()
    psi, da, db, integral, dz, sat, jumped, _ = kernel.step(
        s.psi[None],
        np.array([s.ou_a.value]),
        np.array([s.ou_b.value]),
        np.array([s.controller.integral]),
        np.array([s.dz]),
        np.array([z_a]),
        np.array([z_b]),
        np.array([r]),
    )
    ctrl = s.controller
    if cfg.feedback:
        dzf = float(dz[0])
        ctrl = replace(
            ctrl,
            integral=float(integral[0]),
            last_output=dzf,
            saturated=bool(sat[0]),
        )
    return replace(
        s,
        psi=psi[0],
        t=(s.steps + 1) * cfg.dt,
        ou_a=replace(s.ou_a, value=float(da[0])),
        ou_b=replace(s.ou_b, value=float(db[0])),
        controller=ctrl,
        dz=float(dz[0]),
        steps=s.steps + 1,
        jumps=s.jumps + int(jumped[0]),
    )
