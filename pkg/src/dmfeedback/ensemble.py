"""Trajectory ensembles, their statistics and the master-equation reference."""

from __future__ import annotations

import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import streams
from .config import ScenarioConfig
from .entanglement import REFERENCE_FIT, CalibrationFit, fit_calibration, negativity_pure, zz_correlation
from .linalg import projector
from .model import FieldSample, build_hamiltonian, initial_state
from .trajectory import DecoherenceRates, LoopKernel, jump_channels

# Trajectories are always grouped into batches of this size, whatever the
# worker count, so every reduction sees the same partial sums in the same order.
BATCH_SIZE = 500
# density-matrix partial sums cover fixed runs of trajectory indices so the
# reduction order does not depend on batching; BATCH_SIZE must be a multiple
RHO_BLOCK = 25
DRAW_CHUNK = 500


@dataclass
class EnsembleStats:
    times: np.ndarray
    mean_negativity: np.ndarray
    sem_negativity: np.ndarray
    mean_zz: np.ndarray
    sem_zz: np.ndarray
    mean_dz: np.ndarray
    mean_rho: np.ndarray  # (n_samples, 4, 4) trajectory-averaged |psi><psi|
    negativity: np.ndarray  # (n_traj, n_samples) per-trajectory record
    n_traj: int
    master_seed: int
    cfg: ScenarioConfig
    n_jumps: int = 0

    def window_mask(self, window) -> np.ndarray:
        lo, hi = window
        eps = 1e-9 * max(1.0, abs(hi))
        mask = (self.times >= lo - eps) & (self.times <= hi + eps)
        if not mask.any():
            raise ValueError(f"window {window} contains no samples")
        return mask


@dataclass
class _BatchResult:
    negativity: np.ndarray
    zz: np.ndarray
    dz: np.ndarray
    rho_blocks: np.ndarray  # (n_blocks, n_samples, 4, 4)
    n_jumps: int


def sample_times(cfg: ScenarioConfig) -> np.ndarray:
    n_samples = cfg.n_steps // cfg.sample_stride + 1
    return np.arange(n_samples) * cfg.sample_stride * cfg.dt


def _refinement_basis(refine: int) -> np.ndarray:
    """Orthonormal matrix whose first column is constant, 1/sqrt(refine)."""
    seed = np.eye(refine)
    seed[:, 0] = 1.0
    q, _ = np.linalg.qr(seed)
    return q * np.sign(q[0, 0])


class _JumpSlots:
    """Jump decisions for the sub-steps of one coarse interval, driven by the coarse uniform.

    The coarse rule gives channel ``k`` the interval
    ``[C[k-1], C[k])`` of the unit line (``C`` = cumulative probabilities).
    Here channel ``k`` owns a slot at the same place, sized from the
    interval-start probabilities; sub-step ``s`` claims measure
    ``q_s * p_s[k]`` for channel ``k`` inside its slot, spilling into a
    shared tail past the last slot once the slot is full.  ``q_s`` is the
    still-unclaimed measure, so conditional on no earlier jump each claim
    has probability ``p_s[k]`` exactly.  A fine jump then lands where the
    coarse one would, up to the O(dt) drift of the probabilities.  After a
    jump the remaining sub-steps use the plain rule on fresh uniforms.
    """

    def __init__(self, u, widths, fresh_streams):
        self.u = u[:, None]
        self.start = np.cumsum(widths, axis=1) - widths
        self.width = widths
        self.used = np.zeros_like(widths)
        self.tail = widths.sum(axis=1)
        self.fresh_streams = fresh_streams
        self.done = np.zeros(len(u), dtype=bool)

    def choose(self, p):
        claim = (1.0 - (self.used.sum(axis=1) + self.tail - self.width.sum(axis=1)))[:, None] * p
        in_slot = np.minimum(claim, self.width - self.used)
        spill = claim - in_slot
        lo = self.start + self.used
        spill_lo = self.tail[:, None] + np.cumsum(spill, axis=1) - spill
        hit = ((self.u >= lo) & (self.u < lo + in_slot)) | ((self.u >= spill_lo) & (self.u < spill_lo + spill))
        channel = np.where(hit.any(axis=1), np.argmax(hit, axis=1), -1)
        self.used += in_slot
        self.tail += spill.sum(axis=1)
        for row in np.nonzero(self.done)[0]:
            r = self.fresh_streams[row].random()
            cum = np.cumsum(p[row])
            channel[row] = int(np.argmax(cum >= r)) if r < cum[-1] else -1
        self.done |= channel >= 0
        return channel


def _run_batch(cfg: ScenarioConfig, fit, indices, master_seed: int, refine: int = 1) -> _BatchResult:
    """Propagate one batch of trajectories.

    With ``refine > 1`` the loop runs at ``cfg.dt / refine`` but stays
    coupled to the coarse run with the same seed: the fine Gaussian
    increments of each coarse interval are an orthogonal mix of the coarse
    draw and ``refine - 1`` extra draws (their sum reproduces the coarse
    Wiener increment), and the coarse jump uniform is shared through
    :class:`_JumpSlots`.  ``refine = 1`` is the plain scheme.
    """
    fine = cfg.replace(dt=cfg.dt / refine) if refine > 1 else cfg
    kernel = LoopKernel(fine, fit)
    n = len(indices)
    tags = (streams.OU_A, streams.OU_B, streams.JUMPS)
    if refine > 1:
        tags += (streams.REFINE_A, streams.REFINE_B, streams.REFINE_JUMPS)
    gens = {ch: [streams.make_stream(master_seed, int(k), ch) for k in indices] for ch in tags}
    # stationary initial draw, same stream position as noise.ou_init
    init_a = np.array([g.standard_normal() for g in gens[streams.OU_A]])
    init_b = np.array([g.standard_normal() for g in gens[streams.OU_B]])
    da = cfg.sigma * init_a if cfg.sigma > 0 else np.zeros(n)
    db = cfg.sigma * init_b if cfg.sigma > 0 else np.zeros(n)

    psi = np.tile(initial_state(cfg.alpha), (n, 1))
    integral = np.zeros(n)
    dz = np.full(n, float(np.clip(cfg.dz0, cfg.dz_min, cfg.dz_max)))

    n_steps = cfg.n_steps
    stride = cfg.sample_stride
    n_samples = n_steps // stride + 1
    neg = np.empty((n, n_samples))
    zz = np.empty((n, n_samples))
    dzs = np.empty((n, n_samples))
    starts = list(range(0, n, RHO_BLOCK))
    rho_blocks = np.empty((len(starts), n_samples, 4, 4), dtype=complex)
    jumps = 0
    basis = _refinement_basis(refine)

    def record(s):
        neg[:, s] = negativity_pure(psi)
        zz[:, s] = zz_correlation(psi)
        dzs[:, s] = dz
        for b, lo in enumerate(starts):
            part = psi[lo:lo + RHO_BLOCK]
            rho_blocks[b, s] = part.T @ part.conj()

    def draws(tag, m, width=None):
        size = m if width is None else (m, width)
        return np.stack([g.standard_normal(size) for g in gens[tag]], axis=1)

    record(0)
    step = 0
    while step < n_steps:
        m = min(DRAW_CHUNK, n_steps - step)
        za = draws(streams.OU_A, m)
        zb = draws(streams.OU_B, m)
        uu = np.stack([g.random(m) for g in gens[streams.JUMPS]], axis=1)
        if refine > 1:
            # (m, n, refine) fine normals
            za = np.concatenate([za[..., None], draws(streams.REFINE_A, m, refine - 1)], axis=2) @ basis.T
            zb = np.concatenate([zb[..., None], draws(streams.REFINE_B, m, refine - 1)], axis=2) @ basis.T
        for k in range(m):
            if refine == 1:
                psi, da, db, integral, dz, _, jumped, _ = kernel.step(
                    psi, da, db, integral, dz, za[k], zb[k], uu[k]
                )
                jumps += int(jumped.sum())
            else:
                slots = _JumpSlots(uu[k], refine * kernel.jump_probabilities(psi), gens[streams.REFINE_JUMPS])
                for sub in range(refine):
                    psi, da, db, integral, dz, _, jumped, _ = kernel.step(
                        psi, da, db, integral, dz, za[k, :, sub], zb[k, :, sub], None, slots.choose
                    )
                    jumps += int(jumped.sum())
            step += 1
            if step % stride == 0:
                record(step // stride)
    return _BatchResult(neg, zz, dzs, rho_blocks, jumps)


def _batch_job(args):
    return _run_batch(*args)


def run_ensemble(
    cfg: ScenarioConfig,
    n_traj: int | None = None,
    master_seed: int | None = None,
    *,
    fit: CalibrationFit | None = None,
    workers: int = 1,
    refine: int = 1,
) -> EnsembleStats:
    """Run ``n_traj`` trajectories; trajectory ``k`` draws only from streams keyed by (seed, k)."""
    n_traj = cfg.n_traj if n_traj is None else int(n_traj)
    master_seed = cfg.master_seed if master_seed is None else int(master_seed)
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if BATCH_SIZE % RHO_BLOCK:
        raise ValueError("BATCH_SIZE must be a multiple of RHO_BLOCK")
    if fit is None and cfg.feedback:
        fit = default_fit(cfg)
    jobs = [
        (cfg, fit, np.arange(lo, min(lo + BATCH_SIZE, n_traj)), master_seed, refine)
        for lo in range(0, n_traj, BATCH_SIZE)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_batch_job, jobs))
    else:
        results = [_batch_job(j) for j in jobs]

    neg = np.concatenate([r.negativity for r in results])
    zz = np.concatenate([r.zz for r in results])
    dz = np.concatenate([r.dz for r in results])
    blocks = [blk for r in results for blk in r.rho_blocks]
    rho_sum = blocks[0].copy()
    for blk in blocks[1:]:
        rho_sum += blk
    ddof = 1 if n_traj > 1 else 0
    sqrt_n = np.sqrt(n_traj)
    return EnsembleStats(
        times=sample_times(cfg),
        mean_negativity=neg.mean(axis=0),
        sem_negativity=neg.std(axis=0, ddof=ddof) / sqrt_n,
        mean_zz=zz.mean(axis=0),
        sem_zz=zz.std(axis=0, ddof=ddof) / sqrt_n,
        mean_dz=dz.mean(axis=0),
        mean_rho=rho_sum / n_traj,
        negativity=neg,
        n_traj=n_traj,
        master_seed=master_seed,
        cfg=cfg,
        n_jumps=sum(r.n_jumps for r in results),
    )


def time_averaged_negativity(stats: EnsembleStats, window=(0.0, 150.0)) -> tuple[float, float]:
    """Mean of <N(t)> over the window; the error is the spread of per-trajectory time averages."""
    mask = stats.window_mask(window)
    per_traj = stats.negativity[:, mask].mean(axis=1)
    n = len(per_traj)
    sem = float(per_traj.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(stats.mean_negativity[mask].mean()), sem


# ---------------------------------------------------------------------------
# calibration data from the closed (unitary) system


def calibration_samples(cfg: ScenarioConfig) -> np.ndarray:
    """(<sz sz>, N) pairs along the noiseless, decay-free evolution of ``cfg``."""
    closed = cfg.replace(gamma1=0.0, gamma2=0.0, sigma=0.0, feedback=False, n_traj=1)
    stats = run_ensemble(closed, 1, closed.master_seed)
    return np.column_stack([stats.mean_zz, stats.mean_negativity])


CALIBRATION_ALPHAS = (1.0, 2.0, 3.0)


def pooled_calibration_samples(alphas=CALIBRATION_ALPHAS, base: ScenarioConfig | None = None) -> np.ndarray:
    """Calibration pairs stacked over several initial states (XXX, B0 = 1, D_z = 1 by default).

    A single unitary run holds <sz sz> fixed, since sz (x) sz commutes with
    the Hamiltonian, so any spread in the proxy has to come from the
    initial state.
    """
    base = base or ScenarioConfig()
    return np.vstack([calibration_samples(base.replace(alpha=float(a))) for a in alphas])


@functools.lru_cache(maxsize=16)
def _self_fit(dt: float, method: str) -> CalibrationFit:
    ref = ScenarioConfig(model="XXX", b0=1.0, dz0=1.0, dt=dt, t_total=150.0,
                         sample_stride=max(1, int(round(0.1 / dt))), method=method)
    return fit_calibration(pooled_calibration_samples(base=ref))


def default_fit(cfg: ScenarioConfig) -> CalibrationFit:
    """Calibration shared by every scenario: the fixed reference map, or our pooled XXX fit."""
    if cfg.calibration == "reference":
        return REFERENCE_FIT
    return _self_fit(cfg.dt, cfg.method)


# ---------------------------------------------------------------------------
# master-equation reference


def liouvillian(h, channels) -> np.ndarray:
    """Superoperator acting on row-major ``rho.ravel()``: vec(A rho B) = (A kron B^T) vec(rho)."""
    h = np.asarray(h, dtype=complex)
    eye = np.eye(h.shape[0])
    lv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for ch in channels:
        op = ch.operator
        ldl = op.conj().T @ op
        lv += ch.rate * (np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))
    return lv


def lindblad_rhs(rho, h, channels) -> np.ndarray:
    out = -1j * (h @ rho - rho @ h)
    for ch in channels:
        op = ch.operator
        ldl = op.conj().T @ op
        out = out + ch.rate * (op @ rho @ op.conj().T - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def lindblad_evolve(h, channels, rho0, t_end: float, dt: float = 0.001, sample_every: float = 0.1):
    """Classical RK4 for a time-independent Lindbladian.

    For a linear ODE one RK4 step is the matrix polynomial
    ``1 + hL + (hL)^2/2 + (hL)^3/6 + (hL)^4/24``; it is formed once and
    applied repeatedly.  Returns ``(times, rhos)`` at every ``sample_every``.
    """
    lv = dt * liouvillian(h, channels)
    dim = lv.shape[0]
    step = np.eye(dim, dtype=complex)
    term = np.eye(dim, dtype=complex)
    for k in range(1, 5):
        term = term @ lv / k
        step = step + term
    per_sample = int(round(sample_every / dt))
    n_samples = int(round(t_end / sample_every)) + 1
    sample_map = np.linalg.matrix_power(step, per_sample)
    v = np.asarray(rho0, dtype=complex).ravel()
    rhos = np.empty((n_samples, 4, 4), dtype=complex)
    rhos[0] = v.reshape(4, 4)
    for s in range(1, n_samples):
        v = sample_map @ v
        rhos[s] = v.reshape(4, 4)
    return np.arange(n_samples) * sample_every, rhos


def lindblad_reference(cfg: ScenarioConfig, dt: float = 0.001):
    """Density matrix trace of the deterministic scenario (no field noise, no feedback)."""
    if cfg.sigma != 0 or cfg.feedback:
        raise ValueError("the master-equation reference needs sigma = 0 and feedback off")
    h = build_hamiltonian(cfg.couplings, FieldSample(cfg.b0), cfg.dz0)
    channels = jump_channels(DecoherenceRates(cfg.gamma1, cfg.gamma2))
    return lindblad_evolve(
        h, channels, projector(initial_state(cfg.alpha)), cfg.t_total, dt, cfg.sample_stride * cfg.dt
    )
