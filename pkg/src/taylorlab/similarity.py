"""Similarity variables xi = X/sqrt(T+1), tau = log(T+1) and Hermite projections.

Fields live on a uniform grid; the xi-grid is the X-grid rescaled, so the
change of frame needs no interpolation.  Integrals use the trapezoid rule
(spectrally accurate for rapidly decaying integrands) and derivatives and
antiderivatives are taken with the FFT.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOCALIZATION_TOL = 1e-10


class LocalizationError(ValueError):
    pass


# ------------------------------------------------------------ grid helpers

def spectral_derivative(f: np.ndarray, h: float, order: int = 1) -> np.ndarray:
    n = f.shape[-1]
    k = 2 * np.pi * np.fft.fftfreq(n, h)
    fh = np.fft.fft(f, axis=-1) * (1j * k) ** order
    if n % 2 == 0:
        fh[..., n // 2] = 0.0
    return np.fft.ifft(fh, axis=-1).real


def antiderivative(f: np.ndarray, h: float) -> np.ndarray:
    """Zero-integral f -> v with v' = f, pinned so the edge values average to 0."""
    n = f.shape[-1]
    k = 2 * np.pi * np.fft.fftfreq(n, h)
    fh = np.fft.fft(f, axis=-1)
    vh = np.zeros_like(fh)
    nz = k != 0
    vh[..., nz] = fh[..., nz] / (1j * k[nz])
    if n % 2 == 0:
        vh[..., n // 2] = 0.0
    v = np.fft.ifft(vh, axis=-1).real
    return v - 0.5 * (v[..., :1] + v[..., -1:])


def fourier_interpolate(f: np.ndarray, x0: float, h: float, x_new: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of samples f at x0 + j h evaluated at x_new."""
    n = f.shape[-1]
    c = np.fft.fft(f, axis=-1) / n
    k = 2 * np.pi * np.fft.fftfreq(n, h)
    if n % 2 == 0:
        c[..., n // 2] = 0.0
    E = np.exp(1j * np.outer(np.asarray(x_new) - x0, k))
    return (c @ E.T).real


def trapezoid(f: np.ndarray, h: float) -> np.ndarray:
    return h * np.sum(f, axis=-1)


# ------------------------------------------------------------ Hermite basis

@dataclass(frozen=True)
class HermiteBasis:
    """phi_k = d^k/dxi^k of the nu_td heat kernel and the dual polynomials H_k."""
    nu_td: float
    N: int

    @property
    def scale(self) -> float:
        return np.sqrt(2.0 * self.nu_td)

    def _he(self, z: np.ndarray, kmax: int) -> np.ndarray:
        out = np.empty((kmax + 1,) + z.shape)
        out[0] = 1.0
        if kmax >= 1:
            out[1] = z
        for k in range(1, kmax):
            out[k + 1] = z * out[k] - k * out[k - 1]
        return out

    def phi(self, xi, kmax: int | None = None) -> np.ndarray:
        kmax = self.N if kmax is None else kmax
        xi = np.asarray(xi, dtype=float)
        z = xi / self.scale
        he = self._he(z, kmax)
        k = np.arange(kmax + 1).reshape((-1,) + (1,) * xi.ndim)
        pref = (4 * np.pi * self.nu_td) ** -0.5 * self.scale ** (-k) * (-1.0) ** k
        return pref * he * np.exp(-0.5 * z * z)

    def H(self, xi, kmax: int | None = None) -> np.ndarray:
        kmax = self.N if kmax is None else kmax
        xi = np.asarray(xi, dtype=float)
        he = self._he(xi / self.scale, kmax)
        k = np.arange(kmax + 1)
        fact = np.cumprod(np.concatenate([[1.0], k[1:]]))
        pref = ((-1.0) ** k * self.scale ** k / fact).reshape((-1,) + (1,) * xi.ndim)
        return pref * he

    def gauss_hermite(self, n: int = 257):
        """Nodes and weights for integrals of the form  int g(xi) phi_0(xi) dxi."""
        x, w = np.polynomial.hermite_e.hermegauss(n)
        return self.scale * x, w / np.sqrt(2 * np.pi)

    def apply_L(self, f: np.ndarray, xi: np.ndarray, h: float) -> np.ndarray:
        """nu_td f'' + (xi f)'/2 by spectral differentiation."""
        return self.nu_td * spectral_derivative(f, h, 2) + 0.5 * spectral_derivative(xi * f, h)


# ------------------------------------------------------- similarity fields

@dataclass(frozen=True, eq=False)
class SimilarityField:
    tau: float
    T: float
    xi: np.ndarray       # uniform grid
    w0: np.ndarray
    gamma: np.ndarray    # (M,)
    V: np.ndarray        # (M, n_xi), each with zero integral
    nu_td: float

    @property
    def h(self) -> float:
        return float(self.xi[1] - self.xi[0])

    def w(self) -> np.ndarray:
        """All modal similarity profiles (w0, w1, ..., wM)."""
        phi0 = HermiteBasis(self.nu_td, 0).phi(self.xi)[0]
        return np.vstack([self.w0, self.gamma[:, None] * phi0 + self.V])


def _check_localized(u: np.ndarray):
    peak = np.max(np.abs(u))
    if peak == 0:
        return
    edge = max(np.max(np.abs(u[..., :2])), np.max(np.abs(u[..., -2:])))
    if edge > LOCALIZATION_TOL * peak:
        raise LocalizationError(f"field not localized: edge/peak = {edge / peak:.2e}")


def to_similarity(u: np.ndarray, X: np.ndarray, T: float, nu_td: float) -> SimilarityField:
    """Modal field u[n, j] = u_n(X_j, T) -> (w0, gamma_n, V_n) on xi = X / sqrt(T+1)."""
    if T < 0:
        raise ValueError("T must be non-negative")
    u = np.atleast_2d(u)
    _check_localized(u)
    s = np.sqrt(T + 1.0)
    xi = np.asarray(X, dtype=float) / s
    h = float(xi[1] - xi[0])
    w0 = s * u[0]
    wn = (T + 1.0) * u[1:]
    gamma = trapezoid(wn, h)
    phi0 = HermiteBasis(nu_td, 0).phi(xi)[0]
    V = wn - gamma[:, None] * phi0
    return SimilarityField(float(np.log1p(T)), float(T), xi, w0, gamma, V, float(nu_td))


def from_similarity(sf: SimilarityField):
    """Inverse map: returns (X, u) with u[n] = u_n(X, T)."""
    s = np.sqrt(sf.T + 1.0)
    w = sf.w()
    u = np.vstack([w[0] / s, w[1:] / (sf.T + 1.0)])
    return sf.xi * s, u


def resample(sf: SimilarityField, xi_new: np.ndarray) -> SimilarityField:
    """Move a similarity field to another xi-grid by trigonometric interpolation."""
    x0, h = float(sf.xi[0]), sf.h
    w0 = fourier_interpolate(sf.w0, x0, h, xi_new)
    V = fourier_interpolate(sf.V, x0, h, xi_new) if len(sf.V) else sf.V
    return SimilarityField(sf.tau, sf.T, np.asarray(xi_new, dtype=float), w0, sf.gamma.copy(), V, sf.nu_td)


def gamma_evolution(gamma0, tau: float, mu) -> np.ndarray:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    mu = np.asarray(mu, dtype=float)
    return np.asarray(gamma0, dtype=float) * np.exp(tau / 2 - mu * np.expm1(tau))


def project_low(f: np.ndarray, xi: np.ndarray, basis: HermiteBasis):
    """Coefficients <f, H_k> for k <= N and the remainder f - sum c_k phi_k."""
    h = float(xi[1] - xi[0])
    Hk = basis.H(xi)
    coeffs = trapezoid(f[..., None, :] * Hk, h)
    rem = f - coeffs @ basis.phi(xi)
    return coeffs, rem


@dataclass(frozen=True, eq=False)
class LowModeDecomposition:
    T: float
    alpha: np.ndarray    # (N+1,)
    beta: np.ndarray     # (N+1, M), beta[k, n-1] = beta_k^n
    gamma: np.ndarray    # (M,)
    w0_rem: np.ndarray   # (n_xi,)
    v_rem: np.ndarray    # (M, n_xi)
    xi: np.ndarray


def decompose(sf: SimilarityField, basis: HermiteBasis) -> LowModeDecomposition:
    h = sf.h
    alpha, w0_rem = project_low(sf.w0, sf.xi, basis)
    if len(sf.V):
        v = antiderivative(sf.V, h)
        beta, v_rem = project_low(v, sf.xi, basis)
    else:
        beta = np.zeros((0, basis.N + 1))
        v_rem = np.zeros((0, len(sf.xi)))
    return LowModeDecomposition(sf.T, alpha, beta.T.copy(), sf.gamma.copy(), w0_rem, v_rem, sf.xi)


def synthesize(modal: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Physical values u(X_j, y_q) = u_0 + sum_n u_n psi_n(y_q)."""
    return modal[0][:, None] + modal[1:].T @ psi


def assemble_uapp(alpha, beta, gamma, basis: HermiteBasis, T: float, X: np.ndarray,
                  psi: np.ndarray | None = None) -> np.ndarray:
    """Low-mode part of the field; modal (M+1, nX), or physical if ``psi`` (M, Q) is given."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    gamma = np.asarray(gamma, dtype=float)
    s = np.sqrt(T + 1.0)
    xi = np.asarray(X, dtype=float) / s
    ph = basis.phi(xi, basis.N + 1)
    out = np.empty((1 + len(gamma), len(xi)))
    out[0] = alpha @ ph[: basis.N + 1] / s
    if len(gamma):
        out[1:] = (gamma[:, None] * ph[0] + beta.T @ ph[1:]) / (T + 1.0)
    return out if psi is None else synthesize(out, psi)


def assemble_urem(w0_rem, v_rem, basis: HermiteBasis, T: float, X: np.ndarray,
                  psi: np.ndarray | None = None) -> np.ndarray:
    s = np.sqrt(T + 1.0)
    h = float(X[1] - X[0]) / s
    v_rem = np.atleast_2d(v_rem)
    out = np.empty((1 + len(v_rem), len(X)))
    out[0] = np.asarray(w0_rem) / s
    if len(v_rem):
        out[1:] = spectral_derivative(v_rem, h) / (T + 1.0)
    return out if psi is None else synthesize(out, psi)


def moments(f: np.ndarray, x: np.ndarray, jmax: int) -> np.ndarray:
    h = float(x[1] - x[0])
    return np.array([trapezoid(x ** j * f, h) for j in range(jmax + 1)])
