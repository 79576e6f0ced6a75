"""Two-qubit Heisenberg Hamiltonian with a z-axis DM term and local z fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import kron, normalize

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
# lowering operator |0><1|; |1> is the excited level (sigma_z = -1)
SM = np.array([[0, 1], [0, 0]], dtype=complex)
SP = SM.conj().T

_SINGLE = {"x": SX, "y": SY, "z": SZ, "minus": SM, "plus": SP}


@dataclass(frozen=True)
class ExchangeCouplings:
    jx: float
    jy: float
    jz: float

    @classmethod
    def preset(cls, name: str) -> "ExchangeCouplings":
        try:
            return PRESETS[name.upper()]
        except KeyError:
            raise ValueError(f"unknown coupling preset {name!r}; expected XXX or XYZ") from None


PRESETS = {
    "XXX": ExchangeCouplings(1.0, 1.0, 1.0),
    "XYZ": ExchangeCouplings(1.0, 2.0, 3.0),
}


@dataclass(frozen=True)
class FieldSample:
    """Static field ``b0`` plus the instantaneous fluctuation on each qubit."""

    b0: float
    delta_a: float = 0.0
    delta_b: float = 0.0

    @property
    def total_a(self) -> float:
        return self.b0 + self.delta_a

    @property
    def total_b(self) -> float:
        return self.b0 + self.delta_b


def pauli_op(axis: str, qubit: str) -> np.ndarray:
    """Single-qubit operator embedded in the 4-dim space (``a`` is the left factor)."""
    try:
        op = _SINGLE[axis]
    except KeyError:
        raise ValueError(f"unknown axis {axis!r}") from None
    if qubit == "a":
        return kron(op, I2)
    if qubit == "b":
        return kron(I2, op)
    raise ValueError(f"unknown qubit {qubit!r}")


ZA = pauli_op("z", "a")
ZB = pauli_op("z", "b")
ZZ = kron(SZ, SZ)
DM_Z = kron(SX, SY) - kron(SY, SX)


def exchange_term(j: ExchangeCouplings) -> np.ndarray:
    return 0.25 * (j.jx * kron(SX, SX) + j.jy * kron(SY, SY) + j.jz * kron(SZ, SZ))


def build_hamiltonian(j: ExchangeCouplings, fields: FieldSample, dz: float) -> np.ndarray:
    h = exchange_term(j)
    h = h + 0.5 * (fields.total_a * ZA + fields.total_b * ZB)
    h = h + 0.25 * dz * DM_Z
    return h


def build_hamiltonian_batch(j: ExchangeCouplings, b_a, b_b, dz) -> np.ndarray:
    """Stack of Hamiltonians for arrays of total fields and DM strengths, shape (n, 4, 4)."""
    b_a = np.asarray(b_a, dtype=float)[:, None, None]
    b_b = np.asarray(b_b, dtype=float)[:, None, None]
    dz = np.asarray(dz, dtype=float)[:, None, None]
    return exchange_term(j)[None] + 0.5 * (b_a * ZA + b_b * ZB) + 0.25 * dz * DM_Z


def initial_state(alpha: float) -> np.ndarray:
    """Spin coherent product state with amplitudes proportional to (1, -a, a, -a^2), a = alpha.

    Factorizes as (|0> + a|1>) (x) (|0> - a|1>), so it carries no entanglement.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    a = float(alpha)
    return normalize(np.array([1.0, -a, a, -a * a], dtype=complex))
