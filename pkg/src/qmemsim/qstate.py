"""Density matrices for polarization qubits and photon pairs.

States are plain complex ``numpy`` arrays of shape (2, 2) or (4, 4). Two-qubit
states are ordered (signal, idler), so ``|HV>`` means signal H, idler V.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_FLOOR = -1e-10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"x": SX, "y": SY, "z": SZ}

KET_H = np.array([1, 0], dtype=complex)
KET_V = np.array([0, 1], dtype=complex)
PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class Polarization:
    """``cos(theta)|H> + exp(i*phi) sin(theta)|V>``."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.theta <= np.pi / 2 + 1e-15):
            raise ValueError(f"theta must lie in [0, pi/2], got {self.theta}")
        if not (0.0 <= self.phi < 2 * np.pi):
            raise ValueError(f"phi must lie in [0, 2pi), got {self.phi}")

    @property
    def ket(self) -> np.ndarray:
        c, s = np.cos(self.theta), np.sin(self.theta)
        # cos(pi/2) is 6e-17 in floating point; keep the basis states exactly diagonal
        c, s = (0.0 if abs(x) < 1e-15 else x for x in (c, s))
        return np.array([c, np.exp(1j * self.phi) * s], dtype=complex)

    @property
    def label(self) -> str | None:
        for name, pol in CANONICAL.items():
            if pol == self:
                return name
        return None


CANONICAL = {
    "H": Polarization(0.0, 0.0),
    "V": Polarization(np.pi / 2, 0.0),
    "+": Polarization(np.pi / 4, 0.0),
    "L": Polarization(np.pi / 4, np.pi / 2),
}
LABELS = tuple(CANONICAL)


def polarization(label: str) -> Polarization:
    try:
        return CANONICAL[label]
    except KeyError:
        raise ValueError(f"unknown polarization label {label!r}") from None


def projector(ket: np.ndarray) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    ket = ket / np.linalg.norm(ket)
    return np.outer(ket, ket.conj())


def polarization_to_density(p: Polarization) -> np.ndarray:
    return projector(p.ket)


def validate_density(rho: np.ndarray) -> np.ndarray:
    """Raise ``ValueError`` unless ``rho`` is a valid 2x2 or 4x4 density matrix."""
    rho = np.asarray(rho)
    if rho.shape not in ((2, 2), (4, 4)):
        raise ValueError(f"density matrix must be 2x2 or 4x4, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > TRACE_TOL:
        raise ValueError(f"density matrix trace is {np.trace(rho).real!r}, expected 1")
    if np.linalg.eigvalsh(rho).min() < PSD_FLOOR:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho


def is_density(rho: np.ndarray) -> bool:
    try:
        validate_density(rho)
    except ValueError:
        return False
    return True


def project_to_density(rho: np.ndarray) -> np.ndarray:
    """Nearest valid state by clipping eigenvalues; only call when a caller asks for it."""
    rho = (rho + rho.conj().T) / 2
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0, None)
    w /= w.sum()
    return (v * w) @ v.conj().T


def fidelity_to_pure(rho: np.ndarray, target: np.ndarray) -> float:
    """Overlap ``<psi|rho|psi>`` with a pure target ket."""
    rho = np.asarray(rho)
    target = np.asarray(target, dtype=complex)
    if rho.shape != (target.size, target.size):
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs ket of length {target.size}")
    target = target / np.linalg.norm(target)
    f = float(np.real(target.conj() @ rho @ target))
    return min(1.0, max(0.0, f))


def apply_depolarizing(rho: np.ndarray, p: float) -> np.ndarray:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability must lie in [0, 1], got {p}")
    d = rho.shape[0]
    return (1 - p) * rho + p * np.trace(rho) * np.eye(d) / d


def werner_state(fidelity: float) -> np.ndarray:
    """Mixture of |Psi+> and white noise with the given Bell fidelity."""
    if not 0.25 <= fidelity <= 1.0:
        raise ValueError(f"Werner fidelity must lie in [0.25, 1], got {fidelity}")
    p = (1 - fidelity) * 4 / 3
    return (1 - p) * projector(PSI_PLUS) + p * np.eye(4) / 4


def on_qubit(rho: np.ndarray, qubit_map: Callable[[np.ndarray], np.ndarray], qubit: int = 1) -> np.ndarray:
    """Apply a linear single-qubit map to one half of a two-qubit operator.

    ``qubit_map`` must be linear on arbitrary 2x2 matrices (not just states);
    the result is not renormalized.
    """
    if rho.shape == (2, 2):
        return qubit_map(rho)
    t = rho.reshape(2, 2, 2, 2)  # (a, b, a', b')
    out = np.empty_like(t)
    for i in range(2):
        for j in range(2):
            if qubit == 1:
                out[i, :, j, :] = qubit_map(t[i, :, j, :])
            else:
                out[:, i, :, j] = qubit_map(t[:, i, :, j])
    return out.reshape(4, 4)


def normalize(rho: np.ndarray) -> np.ndarray:
    tr = np.trace(rho).real
    if tr <= 0:
        raise ValueError("cannot normalize an operator with non-positive trace")
    return rho / tr


def reduced_state(rho: np.ndarray, keep: int) -> np.ndarray:
    t = rho.reshape(2, 2, 2, 2)
    if keep == 0:
        return np.einsum("ajbj->ab", t)
    return np.einsum("jajb->ab", t)


# --- Pauli-basis coincidence tomography ------------------------------------

BASES = ("xx", "yy", "zz")


@dataclass(frozen=True)
class PauliBasisCounts:
    basis: str
    n_pp: int
    n_pm: int
    n_mp: int
    n_mm: int

    def __post_init__(self):
        if self.basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}, got {self.basis!r}")
        if min(self.n_pp, self.n_pm, self.n_mp, self.n_mm) < 0:
            raise ValueError("coincidence counts must be non-negative")

    @property
    def total(self) -> int:
        return self.n_pp + self.n_pm + self.n_mp + self.n_mm


def pauli_coefficient(counts: PauliBasisCounts) -> float:
    total = counts.total
    if total == 0:
        raise ValueError("no coincidences recorded")
    return (counts.n_pp + counts.n_mm - counts.n_pm - counts.n_mp) / total


def bell_fidelity(rho_xx: float, rho_yy: float, rho_zz: float) -> tuple[float, bool]:
    """Fidelity to |Psi+> from the three diagonal Pauli correlators.

    Returns ``(fidelity, clamped)``; finite-count estimates may leave [0, 1],
    in which case the value is clamped and the flag set.
    """
    f = (1 + rho_xx + rho_yy - rho_zz) / 4
    clamped = f < 0.0 or f > 1.0
    return min(1.0, max(0.0, f)), clamped


def _eigenprojectors(pauli: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(pauli)
    # eigh sorts ascending: column 0 is the -1 eigenvector
    return np.outer(v[:, 1], v[:, 1].conj()), np.outer(v[:, 0], v[:, 0].conj())


def coincidence_probabilities(rho: np.ndarray, basis: str) -> np.ndarray:
    """Joint outcome probabilities ordered (++, +-, -+, --)."""
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}, got {basis!r}")
    pa, ma = _eigenprojectors(PAULI[basis[0]])
    pb, mb = _eigenprojectors(PAULI[basis[1]])
    probs = np.array(
        [np.real(np.trace(rho @ np.kron(a, b))) for a, b in ((pa, pb), (pa, mb), (ma, pb), (ma, mb))]
    )
    probs = np.clip(probs, 0, None)
    return probs / probs.sum()


def sample_coincidences(rho: np.ndarray, basis: str, shots: int, rng: np.random.Generator) -> PauliBasisCounts:
    if shots < 1:
        raise ValueError("shots must be at least 1")
    n = rng.multinomial(shots, coincidence_probabilities(rho, basis))
    return PauliBasisCounts(basis, *(int(k) for k in n))


def estimate_bell_fidelity(rho: np.ndarray, shots: int, rng: np.random.Generator) -> tuple[float, bool]:
    coeffs = {b: pauli_coefficient(sample_coincidences(rho, b, shots, rng)) for b in BASES}
    return bell_fidelity(coeffs["xx"], coeffs["yy"], coeffs["zz"])
