"""Dense complex linear algebra for small Hilbert spaces.

Everything in the library lives in dimension 2 (a qubit / spin-1/2) or
dimension 4 (two qubits), so states are plain complex ndarrays of shape
(dim,) and operators are (dim, dim) ndarrays.  No sparse machinery, no
GPU, just numpy double precision.

Conventions
-----------
* kets: ``ket_up = [1, 0]``, ``ket_down = [0, 1]``; two-qubit basis is the
  Kronecker order (first subsystem slowest).
* every validator tolerance comes from :data:`unravelings.tolerances.TOL`.
"""

import numpy as np

from .tolerances import TOL

KET_UP = np.array([1.0, 0.0], dtype=complex)
KET_DOWN = np.array([0.0, 1.0], dtype=complex)

_PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}


def pauli(axis: str) -> np.ndarray:
    """Return a copy of the Pauli matrix for ``axis`` in {'x', 'y', 'z'}."""
    try:
        return _PAULI[axis].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}; expected 'x', 'y' or 'z'") from None


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def normalize(psi: np.ndarray) -> np.ndarray:
    """Return psi / ||psi||, raising on a vanishing or non-finite vector."""
    psi = np.asarray(psi, dtype=complex)
    nrm = np.linalg.norm(psi)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite state vector")
    return psi / nrm


def assert_normalized(psi: np.ndarray, tol: float = TOL.norm) -> None:
    nrm2 = float(np.vdot(psi, psi).real)
    if abs(nrm2 - 1.0) > tol:
        raise ValueError(f"state is not normalized: ||psi||^2 - 1 = {nrm2 - 1.0:.3e}")


def is_hermitian(op: np.ndarray, tol: float = TOL.hermiticity) -> bool:
    return bool(np.max(np.abs(op - op.conj().T)) <= tol)


def expectation(psi: np.ndarray, op: np.ndarray) -> float:
    """<psi|op|psi> for a Hermitian op and normalized psi, as a real float.

    The imaginary part must be roundoff-small; anything larger means the
    operator was not Hermitian and is reported instead of silently dropped.
    """
    psi = np.asarray(psi, dtype=complex)
    op = np.asarray(op, dtype=complex)
    if op.shape != (psi.size, psi.size):
        raise ValueError(f"dimension mismatch: state dim {psi.size}, operator {op.shape}")
    val = complex(np.vdot(psi, op @ psi))
    if abs(val.imag) > TOL.imag_part * max(1.0, abs(val.real)):
        raise ValueError(f"expectation has non-negligible imaginary part {val.imag:.3e}")
    return val.real


def conditional_covariance(psi: np.ndarray, op_i: np.ndarray, op_j: np.ndarray) -> float:
    """Symmetrized covariance (1/2)<{op_i, op_j}> - <op_i><op_j> on one state.

    With op_i == op_j this is the conditional spread of the observable on a
    single trajectory state; it is never more than roundoff below zero.
    """
    anti = op_i @ op_j + op_j @ op_i
    return 0.5 * expectation(psi, anti) - expectation(psi, op_i) * expectation(psi, op_j)


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def density_from_ensemble(states, weights) -> np.ndarray:
    """Weighted mixture sum_k w_k |psi_k><psi_k| as a density matrix."""
    states = [np.asarray(s, dtype=complex) for s in states]
    weights = np.asarray(weights, dtype=float)
    if len(states) == 0:
        raise ValueError("empty ensemble")
    if len(states) != weights.size:
        raise ValueError("states and weights have different lengths")
    if np.any(weights < 0.0):
        raise ValueError("ensemble weights must be non-negative")
    if abs(weights.sum() - 1.0) > TOL.weight_sum:
        raise ValueError(f"ensemble weights sum to {weights.sum():.12f}, not 1")
    for s in states:
        assert_normalized(s, tol=1e-10)
    dim = states[0].size
    rho = np.zeros((dim, dim), dtype=complex)
    for w, s in zip(weights, states):
        rho += w * np.outer(s, s.conj())
    return rho


def check_density_matrix(rho: np.ndarray) -> None:
    """Raise unless rho is Hermitian, unit trace and positive within tolerance."""
    if not is_hermitian(rho):
        raise ValueError("density matrix is not Hermitian within tolerance")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > TOL.trace:
        raise ValueError(f"density matrix trace {tr} differs from 1")
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if evals.min() < TOL.eigenvalue_floor:
        raise ValueError(f"density matrix has negative eigenvalue {evals.min():.3e}")


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, used for both states and operators."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def partial_trace(rho: np.ndarray, keep: str) -> np.ndarray:
    """Reduce a two-qubit density matrix to one qubit.

    ``keep`` selects which subsystem survives: 'first' or 'second'.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"partial_trace expects a 4x4 matrix, got {rho.shape}")
    r = rho.reshape(2, 2, 2, 2)
    if keep == "first":
        return np.einsum("ikjk->ij", r)
    if keep == "second":
        return np.einsum("kikj->ij", r)
    raise ValueError(f"keep must be 'first' or 'second', got {keep!r}")
