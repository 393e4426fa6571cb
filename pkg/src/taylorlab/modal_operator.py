"""Fourier-space generator B(kappa) = B0 + kappa B1 + kappa^2 B2 of the modal system.

Ordering of the state vector: index 0 is the cross-sectional mean u, indices
1..M are the shear modes v_n.  B1 carries +i A, i.e. the symbol of the
advection term for data transformed with exp(+i kappa X); fields stored with
the exp(-i kappa X) convention evolve with B(-kappa) = conj B(kappa).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .cross_section import ShearField


@dataclass(frozen=True, eq=False)
class ModalOperator:
    nu: float
    B0: np.ndarray   # real diagonal
    B1: np.ndarray   # i A [[0, chi^T], [chi, coupling]]
    b2: float        # B2 = b2 * I with b2 = -nu^2

    @property
    def size(self) -> int:
        return self.B0.shape[0]

    @property
    def B2(self) -> np.ndarray:
        return self.b2 * np.eye(self.size)

    def C(self, kappa) -> np.ndarray:
        k = np.asarray(kappa, dtype=float)
        return self.B0 + k[..., None, None] * self.B1

    def to_json(self) -> dict:
        return {"nu": self.nu, "B0_diag": np.diag(self.B0).tolist(),
                "B1_imag": self.B1.imag.tolist(), "B2_scalar": self.b2}


def assemble(field: ShearField, nu: float, spectrum=None) -> ModalOperator:
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    if spectrum is not None and spectrum.modes != field.modes:
        raise ValueError(f"field has {field.modes} modes, spectrum has {spectrum.modes}")
    M = field.modes
    B0 = np.diag(np.concatenate([[0.0], -field.mu])).astype(float)
    S = np.zeros((M + 1, M + 1))
    S[0, 1:] = field.chi
    S[1:, 0] = field.chi
    S[1:, 1:] = field.coupling
    B1 = 1j * field.A * S
    return ModalOperator(float(nu), B0, B1, -float(nu) ** 2)


def evaluate(op: ModalOperator, kappa) -> np.ndarray:
    """B(kappa); an array of wavenumbers gives a stack of matrices."""
    k = np.asarray(kappa, dtype=float)[..., None, None]
    I = np.eye(op.size)
    return op.B0 + k * op.B1 + (k * k * op.b2) * I


def split_symmetric(op: ModalOperator, kappa: float):
    """Hermitian part B0 + kappa^2 B2 and anti-Hermitian part kappa B1."""
    S = (op.B0 + kappa * kappa * op.b2 * np.eye(op.size)).astype(complex)
    return S, kappa * op.B1


def propagator(op: ModalOperator, kappa, T: float) -> np.ndarray:
    """exp(B(kappa) T) by scaling and squaring (stacked for array kappa)."""
    if T < 0:
        raise ValueError("propagation time must be non-negative")
    B = evaluate(op, kappa)
    if T == 0:
        return np.broadcast_to(np.eye(op.size, dtype=complex), B.shape).copy()
    return expm(B * T)


def nu_factorization_check(op: ModalOperator, kappa: float, T: float) -> float:
    """|| exp(B T) - exp(-nu^2 k^2 T) exp(C T) || with C = B0 + kappa B1."""
    if T < 0:
        raise ValueError("propagation time must be non-negative")
    full = propagator(op, kappa, T)
    split = np.exp(op.b2 * kappa * kappa * T) * expm(op.C(kappa) * T)
    return float(np.linalg.norm(full - split, 2))


def top_mode_fraction(W: np.ndarray) -> float:
    """Share of the l2 mass carried by the last retained mode (truncation monitor)."""
    W = np.asarray(W)
    tot = np.sum(np.abs(W) ** 2)
    return float(np.sum(np.abs(W[..., -1]) ** 2) / tot) if tot > 0 else 0.0
