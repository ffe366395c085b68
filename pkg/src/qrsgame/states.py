"""States shared by the players and the states the referee sends.

Conventions used by every module in this package: the computational basis
is the sigma_3 eigenbasis with |0> the +1 eigenvector, two-qubit operators
are Kronecker products in (first x second) order, and the Bell states are

    |Psi-+-> = (|01> -+- |10>)/sqrt(2),   |Phi-+-> = (|00> -+- |11>)/sqrt(2).

Referee ensembles are six qubit states indexed by a key (j, s) with
j in {1, 2, 3} and s in {+1, -1}; the state for key (j, s) is stored as its
Bloch vector, (1 + n.sigma)/2. The ideal ensemble has n = s * e_j.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .qmath import (
    BLOCH_NORM_TOL,
    bloch_to_density,
    identity,
    is_density_matrix,
    real_trace_product,
)

SETTING_KEYS: tuple[tuple[int, int], ...] = (
    (1, 1), (1, -1), (2, 1), (2, -1), (3, 1), (3, -1),
)


class BellIndex(Enum):
    PSI_MINUS = "PsiMinus"
    PSI_PLUS = "PsiPlus"
    PHI_MINUS = "PhiMinus"
    PHI_PLUS = "PhiPlus"


_INV_SQRT2 = 1.0 / np.sqrt(2.0)

_BELL_KETS = {
    BellIndex.PSI_MINUS: np.array([0.0, _INV_SQRT2, -_INV_SQRT2, 0.0], dtype=complex),
    BellIndex.PSI_PLUS: np.array([0.0, _INV_SQRT2, _INV_SQRT2, 0.0], dtype=complex),
    BellIndex.PHI_MINUS: np.array([_INV_SQRT2, 0.0, 0.0, -_INV_SQRT2], dtype=complex),
    BellIndex.PHI_PLUS: np.array([_INV_SQRT2, 0.0, 0.0, _INV_SQRT2], dtype=complex),
}


def bell_state(idx: BellIndex) -> np.ndarray:
    """Projector onto the requested Bell state."""
    if not isinstance(idx, BellIndex):
        raise ValueError(f"expected a BellIndex, got {idx!r}")
    ket = _BELL_KETS[idx]
    return np.outer(ket, ket.conj())


def werner_state(w: float) -> np.ndarray:
    """Werner state w |Psi-><Psi-| + (1 - w) 1/4 for w in [0, 1]."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"Werner weight must lie in [0, 1], got {w}")
    return w * bell_state(BellIndex.PSI_MINUS) + (1.0 - w) * identity(4) / 4.0


def werner_from_bell_weights(p: float) -> tuple[np.ndarray, float]:
    """Mix |Psi-> with weight p against the other three Bell states.

    The three unwanted Bell states enter with weight (1 - p)/3 each, which
    reproduces werner_state(w) with w = (4 p - 1)/3. Returns the state and w.
    """
    if not 0.25 <= p <= 1.0:
        raise ValueError(f"singlet weight must lie in [0.25, 1], got {p}")
    rest = (1.0 - p) / 3.0
    state = p * bell_state(BellIndex.PSI_MINUS) + rest * (
        bell_state(BellIndex.PSI_PLUS)
        + bell_state(BellIndex.PHI_MINUS)
        + bell_state(BellIndex.PHI_PLUS)
    )
    return state, (4.0 * p - 1.0) / 3.0


@dataclass
class RefereeEnsemble:
    """Six referee states, one Bloch vector per key (j, s)."""

    vectors: dict[tuple[int, int], np.ndarray]

    def __post_init__(self) -> None:
        if set(self.vectors) != set(SETTING_KEYS):
            raise ValueError(
                f"ensemble must cover exactly the keys {sorted(SETTING_KEYS)}, "
                f"got {sorted(self.vectors)}"
            )
        clean = {}
        for key in SETTING_KEYS:
            v = np.asarray(self.vectors[key], dtype=float)
            if v.shape != (3,):
                raise ValueError(f"Bloch vector for {key} must have shape (3,)")
            norm = float(np.linalg.norm(v))
            if norm > 1.0 + BLOCH_NORM_TOL:
                raise ValueError(f"Bloch vector for {key} has norm {norm:.6f} > 1")
            clean[key] = v
        self.vectors = clean

    def vector(self, j: int, s: int) -> np.ndarray:
        if (j, s) not in self.vectors:
            raise ValueError(f"no referee state for key (j={j}, s={s})")
        return self.vectors[(j, s)]


def referee_ideal() -> RefereeEnsemble:
    """The six ideal referee states, Bloch vectors s * e_j."""
    vectors = {}
    for j, s in SETTING_KEYS:
        v = np.zeros(3)
        v[j - 1] = float(s)
        vectors[(j, s)] = v
    return RefereeEnsemble(vectors)


def referee_state(ensemble: RefereeEnsemble, j: int, s: int) -> np.ndarray:
    """Density matrix of the referee state for key (j, s)."""
    return bloch_to_density(ensemble.vector(j, s))


def depolarize_ensemble(ensemble: RefereeEnsemble, eta: float) -> RefereeEnsemble:
    """Shrink every Bloch vector by eta in [0, 1]."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"depolarizing strength must lie in [0, 1], got {eta}")
    return RefereeEnsemble({k: eta * v for k, v in ensemble.vectors.items()})


def rotate_ensemble(ensemble: RefereeEnsemble, rot: np.ndarray) -> RefereeEnsemble:
    """Apply one rotation matrix to every Bloch vector."""
    rot = np.asarray(rot, dtype=float)
    if rot.shape != (3, 3):
        raise ValueError(f"rotation must be a 3x3 matrix, got shape {rot.shape}")
    if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-9 or np.linalg.det(rot) < 0.0:
        raise ValueError("rotation must be orthogonal with determinant +1")
    return RefereeEnsemble({k: rot @ v for k, v in ensemble.vectors.items()})


def fidelity_pure(rho: np.ndarray, m: np.ndarray) -> float:
    """Fidelity of a qubit state with the pure state of unit Bloch vector m.

    For a target projector (1 + m.sigma)/2 this is (1 + n_rho . m)/2.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3,) or abs(np.linalg.norm(m) - 1.0) > BLOCH_NORM_TOL:
        raise ValueError("target Bloch vector must be a unit vector")
    check = is_density_matrix(rho)
    if not check:
        raise ValueError(
            "fidelity_pure expects a density matrix "
            f"(hermiticity {check.hermiticity:.2e}, trace error {check.trace_error:.2e}, "
            f"min eigenvalue {check.min_eigenvalue:.2e})"
        )
    return real_trace_product(np.asarray(rho), bloch_to_density(m))


def ensemble_to_dict(ensemble: RefereeEnsemble) -> dict:
    """JSON-ready form: {"vectors": [{"j": ..., "s": ..., "n": [...]}, ...]}."""
    records = [
        {"j": j, "s": s, "n": [float(x) for x in ensemble.vector(j, s)]}
        for j, s in SETTING_KEYS
    ]
    return {"vectors": records}


def ensemble_from_dict(data: dict) -> RefereeEnsemble:
    """Inverse of ensemble_to_dict; duplicate or missing keys are rejected."""
    if not isinstance(data, dict) or "vectors" not in data:
        raise ValueError("ensemble JSON must be an object with a 'vectors' list")
    vectors: dict[tuple[int, int], np.ndarray] = {}
    for rec in data["vectors"]:
        try:
            key = (int(rec["j"]), int(rec["s"]))
            vec = np.asarray(rec["n"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed ensemble record {rec!r}") from exc
        if key in vectors:
            raise ValueError(f"duplicate referee key (j={key[0]}, s={key[1]})")
        vectors[key] = vec
    return RefereeEnsemble(vectors)


def save_ensemble(ensemble: RefereeEnsemble, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ensemble_to_dict(ensemble), fh, indent=2)
        fh.write("\n")


def load_ensemble(path: str) -> RefereeEnsemble:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"could not parse ensemble JSON {path}: {exc}") from exc
    return ensemble_from_dict(data)
