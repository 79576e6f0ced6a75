"""Dense complex linear algebra for two-qubit operators.

Matrices are plain ``numpy`` arrays of dtype ``complex128`` with shape
``(2, 2)`` or ``(4, 4)``; state vectors have shape ``(4,)`` in the basis
order ``|00>, |01>, |10>, |11>`` (qubit ``a`` is the left factor).
"""

from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
JACOBI_OFF_TOL = 1e-12


class LinalgError(ValueError):
    """Raised on shape mismatches, non-Hermitian input or non-convergence."""


def as_matrix(m, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise LinalgError(f"expected a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise LinalgError(f"expected a {dim}x{dim} matrix, got {arr.shape}")
    return arr


def kron(a, b) -> np.ndarray:
    """Kronecker product of two 2x2 matrices, ``(a (x) b)[2i+k, 2j+l] = a[i,j] b[k,l]``."""
    a = as_matrix(a, 2)
    b = as_matrix(b, 2)
    out = np.empty((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            out[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = a[i, j] * b
    return out


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)


def normalize(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise LinalgError("cannot normalize the zero vector")
    return psi / norm


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def expectation(psi, op) -> complex:
    """Return ``<psi|op|psi>``."""
    psi = np.asarray(psi, dtype=complex)
    op = as_matrix(op, psi.shape[0])
    return complex(np.vdot(psi, op @ psi))


def partial_transpose_a(rho) -> np.ndarray:
    """Transpose the qubit-``a`` indices: ``out[(i,k),(j,l)] = rho[(j,k),(i,l)]``."""
    rho = as_matrix(rho, 4)
    return rho.reshape(2, 2, 2, 2).transpose(2, 1, 0, 3).reshape(4, 4)


def _off_norm(m: np.ndarray) -> float:
    off = m - np.diag(np.diag(m))
    return float(np.sqrt(np.sum(np.abs(off) ** 2)))


def hermitian_eigen(m, tol: float = HERMITIAN_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a small Hermitian matrix by cyclic Jacobi rotations.

    Each off-diagonal element ``a_pq = |a_pq| exp(i phi)`` is first made real
    by a diagonal phase, then annihilated by a real plane rotation.  Sweeps
    stop once the off-diagonal Frobenius norm drops below
    ``JACOBI_OFF_TOL * max(1, ||m||_F)``.

    Returns
    -------
    eigenvalues : ndarray of float, ascending
    eigenvectors : ndarray, columns are the orthonormal eigenvectors
    """
    a = as_matrix(m)
    if not is_hermitian(a, tol):
        raise LinalgError("hermitian_eigen: input is not Hermitian within tolerance")
    n = a.shape[0]
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=complex)
    threshold = JACOBI_OFF_TOL * max(1.0, float(np.linalg.norm(a)))

    for _ in range(JACOBI_MAX_SWEEPS):
        if _off_norm(a) <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag < 1e-300:
                    continue
                phase = apq / mag
                app = a[p, p].real
                aqq = a[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # G = diag-phase(q) @ real rotation on (p, q)
                g = np.eye(n, dtype=complex)
                g[p, p] = c
                g[p, q] = s
                g[q, p] = -s * np.conj(phase)
                g[q, q] = c * np.conj(phase)
                a = g.conj().T @ a @ g
                a[p, q] = a[q, p] = 0.0
                v = v @ g
    else:
        if _off_norm(a) > threshold:
            raise LinalgError("hermitian_eigen: Jacobi iteration did not converge")

    evals = np.real(np.diag(a))
    order = np.argsort(evals, kind="stable")
    return evals[order], v[:, order]
