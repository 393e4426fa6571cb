"""Hypocoercive Lyapunov functional for intermediate wavenumbers.

Phi(u, v) = |u|^2 + |v|^2 + 2 Re(i u sum_m sigma_m conj(v_m)),
sigma_m = -c chi_m / (2 A kappa mu_m), written as the Hermitian form W^H G W.
The state W = (u, v) evolves with B(kappa) (exp(+i kappa X) symbol).

Two rates are carried: ``M_tilde`` = mu1 / M_check as constructed from the
functional, and ``M_tilde_corrected`` = min(mu1, c |chi|_mu^2 / 12) / M_check,
which is what the dissipation estimate actually delivers (the u-block only
dissipates at rate c |chi|_mu^2 / 12).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import eigh

from .cross_section import ShearField
from .modal_operator import ModalOperator, evaluate, propagator
from .spectral import default_kappa0


@dataclass(frozen=True, eq=False)
class HypoCertificate:
    kappa0: float
    delta: float
    kappa1: float
    nu: float
    A: float
    mu: np.ndarray
    chi: np.ndarray
    c: float
    c_bounds: dict
    binding: str
    second_display_binding: bool
    Q1_sq: float
    Q2_sq: float
    Q3_sq: float
    M_check: float
    M_tilde: float
    dissipation_corrected: float
    zeta0: float = 1.0

    @property
    def band(self) -> tuple[float, float]:
        return self.kappa0 * (1 - self.delta), self.kappa1 / self.nu

    @property
    def mu1(self) -> float:
        return float(self.mu[0])

    @property
    def M_tilde_corrected(self) -> float:
        return self.dissipation_corrected / self.M_check

    def rate(self, which="uncorrected") -> float:
        if isinstance(which, (int, float)):
            return float(which)
        return self.M_tilde if which == "uncorrected" else self.M_tilde_corrected

    def sigma_coeffs(self, kappa: float) -> np.ndarray:
        return -self.c * self.chi / (2 * self.A * kappa * self.mu)

    def in_band(self, kappa: float, rtol: float = 1e-12) -> bool:
        lo, hi = self.band
        k = abs(kappa)
        return lo * (1 - rtol) <= k <= hi * (1 + rtol)

    def to_json(self) -> dict:
        lo, hi = self.band
        return {
            "kappa0": self.kappa0, "delta": self.delta, "kappa1": self.kappa1, "nu": self.nu,
            "band": [lo, hi], "zeta0": self.zeta0, "c": self.c,
            "c_bounds": self.c_bounds,
            "c_margins": {k: v - self.c for k, v in self.c_bounds.items()},
            "binding": self.binding, "second_display_binding": self.second_display_binding,
            "Q1_sq": self.Q1_sq, "Q2_sq": self.Q2_sq, "Q3_sq": self.Q3_sq,
            "M_check": self.M_check, "M_tilde": self.M_tilde,
            "M_tilde_corrected": self.M_tilde_corrected,
            "dissipation_corrected": self.dissipation_corrected,
        }


def build_certificate(field: ShearField, nu: float, kappa0: float | None = None, delta: float = 0.1,
                      kappa1: float = 1.0, safety: float = 0.9) -> HypoCertificate:
    if not 0 < delta < 0.25:
        raise ValueError(f"delta={delta} outside (0, 1/4)")
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    mn = field.mu_norm_sq
    if mn == 0:
        raise ValueError("μ-norm zero: functional degenerate")
    A = field.A
    if A <= 0:
        raise ValueError("mean advection must be positive for the band construction")
    k0 = default_kappa0(field) if kappa0 is None else float(kappa0)
    limit = field.mu[0] / (2 * A * field.chi_sup)
    if not 0 < k0 < limit:
        raise ValueError(f"kappa0={k0:g} outside the admissible range (0, {limit:g})")
    if kappa1 <= nu * k0 * (1 - delta):
        raise ValueError("kappa1 must exceed nu*kappa0*(1-delta)")
    mu1 = float(field.mu[0])
    l2 = field.chi_l2
    mun = np.sqrt(mn)
    sup = field.chi_sup
    bounds = {
        "first/(1-delta)/|chi|_mu^2": (1 - delta) / mn,
        "first/mu1/(cross terms)": mu1 / (l2 * mun + sup ** 2 + 2 * l2 ** 2 / (3 * A ** 2 * k0 ** 2 * mn)),
        "first/A^2 kappa0^2 (1-delta)": A ** 2 * k0 ** 2 * (1 - delta),
        "first/12 mu1/|chi|_mu^2": 12 * mu1 / mn,
        "second/A kappa0 (1-delta)": A * k0 * (1 - delta),
        "second/A kappa0 (1-delta)/|chi|_mu^2": A * k0 * (1 - delta) / mn,
    }
    binding = min(bounds, key=bounds.get)
    c = safety * bounds[binding]
    M_check = 1 + 0.5 * A * k0 * max(1.0, mn)
    return HypoCertificate(
        kappa0=k0, delta=float(delta), kappa1=float(kappa1), nu=float(nu), A=A,
        mu=field.mu.copy(), chi=field.chi.copy(), c=c, c_bounds=bounds, binding=binding,
        second_display_binding=binding.startswith("second"),
        Q1_sq=1 / (A * k0 * mn), Q2_sq=1 / (A * k0 * mn), Q3_sq=2 / mn,
        M_check=M_check, M_tilde=mu1 / M_check,
        dissipation_corrected=min(mu1, c * mn / 12))


def metric(cert: HypoCertificate, kappa: float) -> np.ndarray:
    """Hermitian G with Phi(W) = W^H G W."""
    s = cert.sigma_coeffs(kappa)
    n = len(s) + 1
    G = np.eye(n, dtype=complex) * cert.zeta0
    G[0, 1:] = -1j * s
    G[1:, 0] = 1j * s
    return G


def phi(cert: HypoCertificate, kappa: float, state) -> np.ndarray:
    W = np.asarray(state, dtype=complex)
    u, v = W[..., 0], W[..., 1:]
    s = cert.sigma_coeffs(kappa)
    cross = 2 * np.real(1j * u * np.sum(s * np.conj(v), axis=-1))
    return cert.zeta0 * (np.abs(u) ** 2 + np.sum(np.abs(v) ** 2, axis=-1)) + cross


def dphi(cert: HypoCertificate, op: ModalOperator, kappa: float, state) -> np.ndarray:
    """dPhi/dT = Re W^H (G B + B^H G) W along dW/dT = B(kappa) W."""
    G = metric(cert, kappa)
    B = evaluate(op, kappa)
    K = G @ B + B.conj().T @ G
    W = np.asarray(state, dtype=complex)
    return np.real(np.einsum("...i,ij,...j->...", W.conj(), K, W))


@dataclass
class DecayTrace:
    kappa: float
    rate: float
    T: np.ndarray
    Phi: np.ndarray
    bound: np.ndarray
    norm_sq: np.ndarray
    dPhi: np.ndarray
    naive: np.ndarray            # exp(-2 nu^2 kappa^2 T) ||W0||^2, the plain energy bound
    phi_margin: float            # min of bound*(1+1e-8) - Phi
    dphi_margin: float           # min of -rate*Phi + 1e-8 - dPhi
    offending: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.phi_margin >= 0 and self.dphi_margin >= 0

    @property
    def improvement(self) -> float:
        """Naive energy bound over the certified bound 4 exp(-rate T)||W0||^2 at the final time."""
        return float(self.naive[-1] / (4 * np.exp(-self.rate * self.T[-1]) * self.naive[0]))


def phi_decay_check(op: ModalOperator, cert: HypoCertificate, kappa: float, initial,
                    T_max: float = 10.0, samples: int = 201, rate="uncorrected") -> DecayTrace:
    if not cert.in_band(kappa):
        lo, hi = cert.band
        raise ValueError(f"kappa={kappa:g} outside the certified band [{lo:g}, {hi:g}]")
    r = cert.rate(rate)
    W0 = np.asarray(initial, dtype=complex)
    T = np.linspace(0.0, T_max, samples)
    dT = T[1] - T[0]
    step = propagator(op, kappa, dT)
    traj = np.empty((samples, len(W0)), dtype=complex)
    traj[0] = W0
    for j in range(1, samples):
        # exact steps of a uniform grid; stays accurate in the relative sense
        traj[j] = step @ traj[j - 1]
    P = phi(cert, kappa, traj)
    D = dphi(cert, op, kappa, traj)
    bound = P[0] * np.exp(-r * T)
    nsq = np.sum(np.abs(traj) ** 2, axis=1)
    pm = bound * (1 + 1e-8) - P
    dm = -r * P + 1e-8 - D
    off = [{"kappa": kappa, "T": float(T[j]), "margin": float(pm[j])} for j in np.where(pm < 0)[0][:5]]
    off += [{"kappa": kappa, "T": float(T[j]), "dphi_margin": float(dm[j])} for j in np.where(dm < 0)[0][:5]]
    naive = np.exp(2 * op.b2 * kappa * kappa * T) * nsq[0]
    return DecayTrace(float(kappa), r, T, P, bound, nsq, D, naive, float(pm.min()), float(dm.min()), off)


@dataclass
class NormDecayReport:
    rate: float
    worst_margin: float
    worst_T: float

    @property
    def passed(self) -> bool:
        return self.worst_margin >= 0


def norm_decay_conclusion(cert: HypoCertificate, trace: DecayTrace) -> NormDecayReport:
    """||W(T)||^2 <= 4 exp(-rate T) ||W(0)||^2 along the trace."""
    b = 4 * np.exp(-trace.rate * trace.T) * trace.norm_sq[0]
    m = b * (1 + 1e-8) - trace.norm_sq
    j = int(np.argmin(m))
    return NormDecayReport(trace.rate, float(m[j]), float(trace.T[j]))


def band_samples(cert: HypoCertificate, n: int = 32) -> np.ndarray:
    lo, hi = cert.band
    return np.geomspace(lo, hi, n)


@dataclass
class BandCertificate:
    kappas: np.ndarray
    metric_min: np.ndarray       # smallest eigenvalue of G (should be >= 1/2)
    metric_max: np.ndarray       # largest eigenvalue of G (should be <= M_check)
    decay_rate: np.ndarray       # largest r with G B + B^H G + r G <= 0
    dissipation: np.ndarray      # -max eigenvalue of G B + B^H G minus nu^2 kappa^2
    abscissa: np.ndarray         # spectral abscissa of B(kappa)


def certify_band(cert: HypoCertificate, op: ModalOperator, kappas=None) -> BandCertificate:
    """Exact quadratic-form quantities over a band sample (generalized eigenproblems)."""
    kappas = band_samples(cert) if kappas is None else np.asarray(kappas, dtype=float)
    gmin, gmax, rate, diss, absc = [], [], [], [], []
    for k in kappas:
        G = metric(cert, k)
        B = evaluate(op, k)
        K = G @ B + B.conj().T @ G
        K = 0.5 * (K + K.conj().T)
        g = np.linalg.eigvalsh(G)
        gmin.append(g[0])
        gmax.append(g[-1])
        rate.append(-eigh(K, G, eigvals_only=True)[-1])
        diss.append(-np.linalg.eigvalsh(K)[-1] - op.nu ** 2 * k * k)
        absc.append(np.linalg.eigvals(B).real.max())
    return BandCertificate(kappas, np.array(gmin), np.array(gmax), np.array(rate), np.array(diss),
                           np.array(absc))
