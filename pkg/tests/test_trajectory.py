import numpy as np
import pytest
import scipy.linalg

from dmfeedback.config import ScenarioConfig
from dmfeedback.entanglement import REFERENCE_FIT, negativity_pure
from dmfeedback.model import ExchangeCouplings, FieldSample, build_hamiltonian, initial_state
from dmfeedback.trajectory import (
    DecoherenceRates,
    LoopKernel,
    TrajectoryError,
    apply_jump,
    decay_operator,
    deterministic_step,
    effective_hamiltonian,
    init_trajectory,
    jump_channels,
    jump_probabilities,
    propagator,
    step_closed_loop,
)

XXX = ExchangeCouplings.preset("XXX")


def channels(g1=0.01, g2=0.01):
    return jump_channels(DecoherenceRates(g1, g2))


def test_channel_order_and_operators():
    chs = channels(0.02, 0.03)
    assert [c.name for c in chs] == ["damp_a", "damp_b", "dephase_a", "dephase_b"]
    assert [c.rate for c in chs] == [0.02, 0.02, 0.03, 0.03]


def test_pure_dephasing_shifts_by_constant():
    h = build_hamiltonian(XXX, FieldSample(1.0, 0.0, 0.0), 1.0)
    heff = effective_hamiltonian(h, channels(0.0, 0.05))
    assert np.allclose(heff, h - 1j * 0.05 * np.eye(4))


def test_damping_on_a_decay_operator():
    only_a = [c for c in channels(1.0, 0.0) if c.name == "damp_a"]
    assert np.allclose(decay_operator(only_a), np.diag([0, 0, 1, 1]))


def test_unitary_step_preserves_norm_to_second_order():
    h = build_hamiltonian(XXX, FieldSample(1.0, 0.0, 0.0), 1.0)
    psi = initial_state(1.0)
    _, norm_sq = deterministic_step(psi, h, 1e-3)
    assert abs(norm_sq - 1) < 1e-5


def test_norm_loss_matches_jump_probability():
    h = build_hamiltonian(XXX, FieldSample(1.0, 0.0, 0.0), 1.0)
    chs = channels(0.3, 0.2)
    psi = initial_state(2.0)
    dt = 1e-4
    _, norm_sq = deterministic_step(psi, effective_hamiltonian(h, chs), dt)
    assert 1 - norm_sq == pytest.approx(jump_probabilities(psi, chs, dt).sum(), rel=1e-3)


def test_jumps():
    chs = channels()
    out = apply_jump(np.array([0, 0, 0, 1], dtype=complex), chs[0])
    assert np.allclose(out, [0, 1, 0, 0])
    with pytest.raises(TrajectoryError):
        apply_jump(np.array([1, 0, 0, 0], dtype=complex), chs[0])


def test_block_propagator_matches_scipy():
    h = build_hamiltonian(ExchangeCouplings.preset("XYZ"), FieldSample(1.0, 0.4, -0.3), 1.7)
    heff = effective_hamiltonian(h, channels(0.2, 0.1))
    for dt in (0.01, 0.7, 5.0):
        assert np.allclose(propagator(heff, dt), scipy.linalg.expm(-1j * dt * heff), atol=1e-12)
    assert np.allclose(propagator(heff, 0.01, "euler"), np.eye(4) - 0.01j * heff)
    with pytest.raises(ValueError):
        propagator(heff, 0.01, "rk4")


def test_dense_fallback():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert np.allclose(propagator(m, 0.1), scipy.linalg.expm(-0.1j * m))


@pytest.mark.parametrize("method", ["expm", "euler"])
def test_kernel_no_jump_matches_propagator(method):
    cfg = ScenarioConfig(model="XYZ", method=method)
    k = LoopKernel(cfg, None)
    rng = np.random.default_rng(2)
    psi = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
    b_a, b_b, dz = rng.uniform(0, 2, 5), rng.uniform(0, 2, 5), rng.uniform(0, 2, 5)
    out = k.no_jump(psi, b_a, b_b, dz)
    for n in range(5):
        h = build_hamiltonian(cfg.couplings, FieldSample(0.0, b_a[n], b_b[n]), dz[n])
        u = propagator(h - 0.5j * k.decay, cfg.dt, method)
        assert np.allclose(out[n], u @ psi[n], atol=1e-13)


def test_unitary_trajectory_keeps_product_negativity_zero_at_start():
    cfg = ScenarioConfig(gamma1=0.0, gamma2=0.0)
    s = init_trajectory(cfg)
    assert negativity_pure(s.psi) == 0.0
    for _ in range(100):
        s = step_closed_loop(s, cfg)
    assert s.jumps == 0
    assert np.isclose(np.linalg.norm(s.psi), 1.0)
    assert s.t == pytest.approx(1.0)


def test_feedback_rails_dz_and_respects_bounds():
    cfg = ScenarioConfig(feedback=True, gamma1=0.0, gamma2=0.0)
    k = LoopKernel(cfg, REFERENCE_FIT)
    s = init_trajectory(cfg)
    dz = []
    for _ in range(3000):
        s = step_closed_loop(s, cfg, REFERENCE_FIT, kernel=k)
        dz.append(s.dz)
    # alpha=1 gives <sz sz> = 0 forever, so the error stays 0.4 and D_z rails at the top
    assert max(dz) == 2.0 and min(dz) >= 0.0
    assert s.controller.saturated


def test_feedback_needs_fit():
    with pytest.raises(ValueError):
        LoopKernel(ScenarioConfig(feedback=True), None)


def test_single_trajectory_is_deterministic():
    cfg = ScenarioConfig(sigma=0.5, gamma1=0.5, gamma2=0.5)
    a, b = init_trajectory(cfg, 3), init_trajectory(cfg, 3)
    for _ in range(300):
        a, b = step_closed_loop(a, cfg), step_closed_loop(b, cfg)
    assert np.array_equal(a.psi, b.psi) and a.jumps == b.jumps > 0
