"""Dense complex linear algebra for one- and two-qubit operators.

Every operator in this package is a plain numpy array of dimension 2 or 4;
nothing here allocates anything larger. Eigenvalues come from a closed form
in dimension 2 and a cyclic Jacobi sweep in dimension 4, so the numeric
path does not depend on an external eigensolver. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Global numeric policy. Hermiticity is judged by the largest entry of
# M - M^dag, positivity by the most negative eigenvalue.
HERMITIAN_TOL = 1e-9
PSD_TOL = 1e-9
BLOCH_NORM_TOL = 1e-9

_JACOBI_OFF_TOL = 1e-12
_MAX_JACOBI_SWEEPS = 60

_PAULI = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


def identity(dim: int) -> np.ndarray:
    """Identity operator of dimension 2 or 4."""
    if dim not in (2, 4):
        raise ValueError(f"unsupported dimension {dim}, expected 2 or 4")
    return np.eye(dim, dtype=complex)


def pauli(j: int) -> np.ndarray:
    """Pauli operator sigma_j for j in {1, 2, 3}."""
    if j not in (1, 2, 3):
        raise ValueError(f"pauli index must be 1, 2 or 3, got {j}")
    return _PAULI[j - 1].copy()


def _as_operator(m: np.ndarray) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] not in (2, 4):
        raise ValueError(f"unsupported dimension {a.shape[0]}, expected 2 or 4")
    return a


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product in (first x second) order, result capped at dim 4."""
    a = _as_operator(a)
    b = _as_operator(b)
    if a.shape[0] * b.shape[0] > 4:
        raise ValueError(
            f"unsupported dimension {a.shape[0] * b.shape[0]}: "
            "stored operators are capped at dimension 4"
        )
    return np.kron(a, b)


def partial_trace(m: np.ndarray, subsystem: str) -> np.ndarray:
    """Trace out one qubit of a two-qubit operator.

    ``subsystem`` names the factor that is removed: ``"first"`` keeps the
    second qubit, ``"second"`` keeps the first.
    """
    m = _as_operator(m)
    if m.shape[0] != 4:
        raise ValueError("partial_trace expects a dimension-4 operator")
    r = m.reshape(2, 2, 2, 2)
    if subsystem == "first":
        return np.einsum("ijil->jl", r)
    if subsystem == "second":
        return np.einsum("ijkj->ik", r)
    raise ValueError(f"subsystem must be 'first' or 'second', got {subsystem!r}")


def hermiticity_defect(m: np.ndarray) -> float:
    """Largest entry of |M - M^dag|."""
    m = np.asarray(m, dtype=complex)
    return float(np.max(np.abs(m - m.conj().T)))


def _jacobi_eigenvalues(m: np.ndarray) -> np.ndarray:
    # Cyclic Jacobi for complex Hermitian matrices: each rotation is a phase
    # that makes the (p, q) entry real followed by the standard real rotation
    # that zeroes it. Quadratic convergence; the sweep cap is defensive.
    a = m.copy()
    n = a.shape[0]
    for _ in range(_MAX_JACOBI_SWEEPS):
        off = math.sqrt(sum(abs(a[p, q]) ** 2 for p in range(n) for q in range(p + 1, n)))
        if off <= _JACOBI_OFF_TOL:
            return np.sort(np.real(np.diag(a)))[::-1]
        for p in range(n - 1):
            for q in range(p + 1, n):
                mag = abs(a[p, q])
                if mag == 0.0:
                    continue
                phase = a[p, q] / mag
                theta = 0.5 * math.atan2(2.0 * mag, (a[p, p] - a[q, q]).real)
                c, s = math.cos(theta), math.sin(theta)
                u = np.eye(n, dtype=complex)
                u[p, p] = c
                u[p, q] = -s
                u[q, p] = s * phase.conjugate()
                u[q, q] = c * phase.conjugate()
                a = u.conj().T @ a @ u
    raise RuntimeError("Jacobi eigenvalue iteration did not converge")


def eig_hermitian(m: np.ndarray) -> np.ndarray:
    """Real eigenvalues of a Hermitian operator, sorted descending."""
    m = _as_operator(m)
    if hermiticity_defect(m) > HERMITIAN_TOL:
        raise ValueError("matrix is not Hermitian within tolerance")
    if m.shape[0] == 2:
        # m = c*1 + v.sigma has eigenvalues c +/- |v| exactly.
        center = 0.5 * (m[0, 0] + m[1, 1]).real
        radius = math.hypot(0.5 * (m[0, 0] - m[1, 1]).real, abs(m[0, 1]))
        return np.array([center + radius, center - radius])
    return _jacobi_eigenvalues(0.5 * (m + m.conj().T))


@dataclass
class DensityCheck:
    """Outcome of a density-matrix test with the measured defects."""

    ok: bool
    hermiticity: float
    trace_error: float
    min_eigenvalue: float

    def __bool__(self) -> bool:
        return self.ok


def is_density_matrix(m: np.ndarray) -> DensityCheck:
    """Check Hermiticity, unit trace and positivity under the global policy."""
    m = _as_operator(m)
    herm = hermiticity_defect(m)
    trace_error = abs(np.trace(m) - 1.0)
    eigs = eig_hermitian(0.5 * (m + m.conj().T))
    min_eig = float(eigs[-1])
    ok = bool(herm <= HERMITIAN_TOL and trace_error <= 1e-9 and min_eig >= -PSD_TOL)
    return DensityCheck(ok, herm, float(trace_error), min_eig)


def bloch_to_density(n: np.ndarray) -> np.ndarray:
    """Qubit state (1 + n.sigma)/2 for a Bloch vector with |n| <= 1."""
    n = np.asarray(n, dtype=float)
    if n.shape != (3,):
        raise ValueError(f"Bloch vector must have shape (3,), got {n.shape}")
    if np.linalg.norm(n) > 1.0 + BLOCH_NORM_TOL:
        raise ValueError(f"Bloch vector norm {np.linalg.norm(n):.6f} exceeds 1")
    out = 0.5 * identity(2)
    for i in (1, 2, 3):
        out += 0.5 * n[i - 1] * _PAULI[i - 1]
    return out


def density_to_bloch(m: np.ndarray) -> np.ndarray:
    """Bloch vector of a qubit operator, component i = Re tr(m sigma_i)."""
    m = _as_operator(m)
    if m.shape[0] != 2:
        raise ValueError("density_to_bloch expects a dimension-2 operator")
    return np.array([np.trace(m @ _PAULI[i]).real for i in range(3)])


def real_trace_product(a: np.ndarray, b: np.ndarray) -> float:
    """Re tr(a b), the Born-rule pairing of a state with an effect."""
    return float(np.trace(np.asarray(a) @ np.asarray(b)).real)
