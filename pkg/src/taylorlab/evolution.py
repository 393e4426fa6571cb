"""Full-field evolution on a wavenumber grid and the large-time diagnostics.

Modal Fourier data follow U(kappa) = int exp(-i kappa X) u(X) dX.  With this
convention the generator at node kappa is B(-kappa) = conj B(kappa).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import expm
from scipy.special import gamma as gamma_fn

from .modal_operator import ModalOperator, evaluate
from .similarity import (HermiteBasis, assemble_uapp, decompose,
                         to_similarity, trapezoid)
from .spectral import spectrum_at

BOUNDARY_TOL = 1e-10


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WavenumberGrid:
    K: int
    L: float

    @property
    def h(self) -> float:
        return self.L / self.K

    @property
    def X(self) -> np.ndarray:
        return -0.5 * self.L + self.h * np.arange(self.K)

    @property
    def kappa(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.K, self.h)

    @property
    def dkappa(self) -> float:
        return 2 * np.pi / self.L

    @property
    def kappa_max(self) -> float:
        return np.pi * self.K / self.L

    @property
    def nyquist(self) -> int | None:
        return self.K // 2 if self.K % 2 == 0 else None

    def classify(self, kappa0: float, kappa1: float, nu: float) -> np.ndarray:
        """0 = low, 1 = intermediate, 2 = high for every node."""
        if self.kappa_max <= kappa1 / nu:
            raise GridError(
                f"grid under-resolved: kappa_max = {self.kappa_max:.3g} must exceed kappa1/nu = {kappa1 / nu:.3g}")
        k = np.abs(self.kappa)
        return np.where(k <= kappa0, 0, np.where(k <= kappa1 / nu, 1, 2))


def make_grid(K: int, L: float) -> WavenumberGrid:
    if K < 8 or L <= 0:
        raise ValueError("need K >= 8 and a positive extent")
    return WavenumberGrid(int(K), float(L))


def auto_extent(nu_td: float, T_max: float, width: float = 1.0, shift: float = 0.0,
                spread: float = 10.0) -> float:
    """Domain length holding +-spread standard deviations of the solution at T_max."""
    sd = np.sqrt(width ** 2 + 2 * nu_td * (T_max + 1.0))
    return 2 * (spread * sd + abs(shift))


def to_fourier(u: np.ndarray, grid: WavenumberGrid) -> np.ndarray:
    """Physical modal samples (M+1, K) -> U (K, M+1)."""
    U = grid.h * np.fft.fft(u, axis=-1) * _phase(grid)
    if grid.nyquist is not None:
        U[..., grid.nyquist] = 0.0
    return U.T.copy()


def _phase(grid: WavenumberGrid) -> np.ndarray:
    # exp(i kappa L / 2) for kappa = 2 pi k / L with integer k
    k = np.round(grid.kappa * grid.L / (2 * np.pi)).astype(int)
    return np.where(k % 2 == 0, 1.0, -1.0)


def to_physical(U: np.ndarray, grid: WavenumberGrid) -> np.ndarray:
    """U (K, M+1) -> physical modal samples (M+1, K)."""
    return np.fft.ifft(U.T * _phase(grid), axis=-1).real / grid.h


@dataclass(frozen=True, eq=False)
class FieldState:
    T: float
    U: np.ndarray           # (K, M+1)
    grid: WavenumberGrid
    mass: float

    def physical(self) -> np.ndarray:
        return to_physical(self.U, self.grid)

    def reality_defect(self) -> float:
        k = np.arange(1, (self.grid.K + 1) // 2)
        return float(np.max(np.abs(self.U[k] - np.conj(self.U[-k]))))


def initialize(kind: str, grid: WavenumberGrid, M: int, *, mass: float = 1.0, width: float = 1.0,
               shift: float = 0.0, modulation: float = 0.5, nu_td: float | None = None) -> FieldState:
    """Built-in initial data.

    blob         Gaussian of the given width and mass, no cross-stream content
    shifted      blob centred at ``shift``
    modulated    g(X)(1 + modulation * psi_1(y))
    self_similar mass * heat kernel of variance 2 nu_td (the T = 0 self-similar profile)
    """
    X = grid.X
    if kind == "self_similar":
        if nu_td is None:
            raise ValueError("self_similar data needs nu_td")
        g = mass * np.exp(-(X - shift) ** 2 / (4 * nu_td)) / np.sqrt(4 * np.pi * nu_td)
    elif kind in ("blob", "shifted", "modulated"):
        x0 = shift if kind != "blob" else 0.0
        g = mass * np.exp(-0.5 * ((X - x0) / width) ** 2) / (np.sqrt(2 * np.pi) * width)
    else:
        raise ValueError(f"unknown initial datum {kind!r}")
    u = np.zeros((M + 1, grid.K))
    u[0] = g
    if kind == "modulated":
        u[1] = modulation * g
    peak = np.max(np.abs(u))
    edge = max(np.max(np.abs(u[:, :2])), np.max(np.abs(u[:, -2:])))
    if edge > BOUNDARY_TOL * peak:
        raise GridError(f"insufficient decay at grid boundary (edge/peak = {edge / peak:.2e})")
    return FieldState(0.0, to_fourier(u, grid), grid, float(trapezoid(u[0], grid.h)))


def _propagate(op: ModalOperator, kappa: np.ndarray, U: np.ndarray, dt: float, parallel: int) -> np.ndarray:
    B = evaluate(op, -kappa)

    def work(idx):
        return np.einsum("kij,kj->ki", expm(B[idx] * dt), U[idx])

    if parallel <= 1:
        return work(slice(None))
    chunks = np.array_split(np.arange(len(kappa)), parallel)
    with ThreadPoolExecutor(max_workers=parallel) as ex:
        parts = list(ex.map(work, chunks))
    return np.concatenate(parts)


def evolve(state: FieldState, op: ModalOperator, T_target: float, parallel: int = 1) -> FieldState:
    dt = T_target - state.T
    if dt < 0:
        raise ValueError("cannot evolve backwards")
    if dt == 0:
        return state
    U = _propagate(op, state.grid.kappa, state.U, dt, parallel)
    if state.grid.nyquist is not None:
        U[state.grid.nyquist] = 0.0
    return FieldState(float(T_target), U, state.grid, state.mass)


def time_schedule(T0: float = 0.05, T_max: float = 100.0, ratio: float = 1.25) -> np.ndarray:
    """0 followed by T0 * ratio^j up to and including T_max."""
    n = int(np.floor(np.log(T_max / T0) / np.log(ratio) + 1e-9))
    T = T0 * ratio ** np.arange(n + 1)
    if T[-1] < T_max * (1 - 1e-12):
        T = np.append(T, T_max)
    return np.concatenate([[0.0], T])


def evolve_series(state0: FieldState, op: ModalOperator, times, parallel: int = 1) -> list[FieldState]:
    """Exact propagation from the initial state to every sample time."""
    return [evolve(state0, op, float(T), parallel) if T > state0.T else state0 for T in times]


# ---------------------------------------------------------------- moments

def spectral_moments(state: FieldState, method: str = "exact"):
    """(m0, m1, m2) of the cross-averaged concentration u_0.

    ``exact`` differentiates the discrete transform analytically at kappa = 0;
    ``fd`` uses 5-point centred differences on the kappa-grid.
    """
    g = state.grid
    if method == "exact":
        u0 = state.physical()[0]
        X = g.X
        return (trapezoid(u0, g.h), trapezoid(X * u0, g.h), trapezoid(X * X * u0, g.h))
    if method == "fd":
        f = state.U[:, 0]
        h = g.dkappa
        fm2, fm1, f0, fp1, fp2 = f[-2], f[-1], f[0], f[1], f[2]
        d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
        d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h * h)
        return (f0.real, (1j * d1).real, (-d2).real)
    raise ValueError(f"unknown moment method {method!r}")


@dataclass
class DiffusivityReport:
    T: np.ndarray
    var: np.ndarray
    D_eff: np.ndarray
    asymptote: float
    method: str


def effective_diffusivity(states: list[FieldState], method: str = "exact",
                          mono_tol: float = 1e-9) -> DiffusivityReport:
    T = np.array([s.T for s in states])
    if len(T) < 10:
        raise ValueError("need at least 10 time samples")
    pos = T[T > 0]
    if pos.size < 2 or pos.max() < 10 * pos.min():
        raise ValueError("time samples must span at least one decade")
    var = []
    for s in states:
        m0, m1, m2 = spectral_moments(s, method)
        var.append(m2 / m0 - (m1 / m0) ** 2)
    var = np.array(var)
    dv = np.diff(var)
    if np.any(dv < -mono_tol * np.abs(var[1:]).max()):
        raise GridError("variance nonmonotone: grid under-resolved")
    D = 0.5 * np.gradient(var, T, edge_order=2)
    n_tail = max(1, int(round(0.2 * len(T))))
    return DiffusivityReport(T, var, D, float(np.mean(D[-n_tail:])), method)


def physical_l2(modal: np.ndarray, h: float) -> float:
    """L2(R x Omega) norm of a modal field via Parseval over cross modes."""
    return float(np.sqrt(h * np.sum(modal ** 2)))


def gaussian_profile(X, C1: float, nu_td: float, T: float) -> np.ndarray:
    v = 4 * nu_td * (T + 1)
    return C1 * np.exp(-X ** 2 / v) / np.sqrt(np.pi * v)


def gaussian_compare(state: FieldState, C1: float, nu_td: float) -> float:
    if state.T <= 0:
        raise ValueError("comparison needs T > 0")
    u = state.physical()
    d = u.copy()
    d[0] -= gaussian_profile(state.grid.X, C1, nu_td, state.T)
    return physical_l2(d, state.grid.h)


def gaussian_compare_unscaled(state: FieldState, nu: float, D_td: float) -> tuple[float, float]:
    """Distance in the original variables x = X/nu, t = T/nu; returns (t, distance)."""
    u = state.physical()
    x = state.grid.X / nu
    hx = state.grid.h / nu
    t = state.T / nu
    C1t = trapezoid(u[0], hx)
    dcoef = nu + D_td / nu
    s = 4 * dcoef * (t + 1 / nu)
    d = u.copy()
    d[0] -= C1t * np.exp(-x ** 2 / s) / np.sqrt(np.pi * s)
    return t, float(np.sqrt(hx * np.sum(d ** 2)))


# -------------------------------------------------------------- remainder

@dataclass
class RemainderReport:
    T: np.ndarray
    norms: np.ndarray
    field_norms: np.ndarray
    slope: float
    bound: float
    status: str

    @property
    def passed(self) -> bool:
        return self.status in ("ok", "rate unresolvable, decay confirmed")


def remainder_series(states: list[FieldState], nu_td: float, N: int):
    """||u - u_app|| at every sample, with u_app from the projected low modes."""
    basis = HermiteBasis(nu_td, N)
    rem, tot = [], []
    for s in states:
        u = s.physical()
        sf = to_similarity(u, s.grid.X, s.T, nu_td)
        lm = decompose(sf, basis)
        app = assemble_uapp(lm.alpha, lm.beta, lm.gamma, basis, s.T, s.grid.X)
        rem.append(physical_l2(u - app, s.grid.h))
        tot.append(physical_l2(u, s.grid.h))
    return np.array(rem), np.array(tot)


def remainder_decay(states: list[FieldState], nu_td: float, N: int, slack: float = 0.1) -> RemainderReport:
    T = np.array([s.T for s in states])
    norms, tot = remainder_series(states, nu_td, N)
    bound = -(N / 6 + 1 / 12) + slack
    sel = T >= T[-1] / 10
    # round-off of grid sums and transforms grows like eps * K
    floor = 10 * np.finfo(float).eps * states[0].grid.K * tot
    if np.all(norms[sel] <= floor[sel]):
        return RemainderReport(T, norms, tot, float("nan"), bound, "rate unresolvable, decay confirmed")
    slope = float(np.polyfit(np.log1p(T[sel]), np.log(norms[sel]), 1)[0])
    return RemainderReport(T, norms, tot, slope, bound, "ok" if slope <= bound else "rate violated")


# ----------------------------------------------------------------- regimes

@dataclass
class RegimeReport:
    name: str
    nodes: int
    checked: int
    worst_margin: float          # min log(bound/actual) (or slope margin for the low band)
    violations: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def regime_decay_check(states: list[FieldState], op: ModalOperator, kappa0: float, kappa1: float,
                       rate: float, mu1: float, low_nodes: int | None = None) -> dict:
    """Per-regime decay of the evolved series.

    high          ||U(k,T)|| <= ||U(k,0)|| exp(-kappa1^2 T)
    intermediate  ||U(k,T)|| <= 2 exp(-rate T / 2) ||U(k,0)||
    low           log ||Q0 U(k,T)|| has slope <= -mu1/2 (Q0 = I - P0 at the node)
    """
    grid = states[0].grid
    T = np.array([s.T for s in states])
    cls = grid.classify(kappa0, kappa1, op.nu)
    U = np.array([s.U for s in states])          # (nT, K, M+1)
    nrm = np.linalg.norm(U, axis=2)              # (nT, K)
    n0 = nrm[0]
    tiny = np.finfo(float).tiny
    out = {}

    def envelope(name, mask, bound_fn):
        idx = np.where(mask & (n0 > 0))[0]
        worst, viol = np.inf, []
        for k in idx:
            b = bound_fn(T) * n0[k]
            ok = nrm[:, k] <= b * (1 + 1e-8)
            with np.errstate(divide="ignore"):
                marg = np.log(np.maximum(b, tiny)) - np.log(np.maximum(nrm[:, k], tiny))
            worst = min(worst, float(marg[1:].min()) if len(marg) > 1 else np.inf)
            if not ok.all():
                j = int(np.argmin(marg))
                viol.append({"kappa": float(grid.kappa[k]), "T": float(T[j]), "log_margin": float(marg[j])})
        out[name] = RegimeReport(name, int(mask.sum()), len(idx), worst, viol)

    envelope("high", cls == 2, lambda t: np.exp(-kappa1 ** 2 * t))
    envelope("intermediate", cls == 1, lambda t: 2 * np.exp(-0.5 * rate * t))

    low = np.where(cls == 0)[0]
    if low_nodes is not None and len(low) > low_nodes:
        low = low[np.argsort(np.abs(grid.kappa[low]), kind="stable")[:low_nodes]]
    worst, viol, checked = np.inf, [], 0
    for k in low:
        sl = spectrum_at(op, -grid.kappa[k])
        Q = np.eye(op.size) - sl.projection
        q = np.linalg.norm(U[:, k] @ Q.T, axis=1)
        full = nrm[:, k]
        if q[0] <= 1e-12 * max(full[0], tiny):
            continue                            # no non-leading content at this node
        good = (q > 1e-11 * q[0]) & (q > 1e-13 * np.maximum(full, tiny))
        if good.sum() < 3:
            continue
        checked += 1
        slope = float(np.polyfit(T[good], np.log(q[good]), 1)[0])
        marg = -0.5 * mu1 - slope
        worst = min(worst, marg)
        if marg < 0:
            viol.append({"kappa": float(grid.kappa[k]), "slope": slope})
    out["low"] = RegimeReport("low", len(np.where(cls == 0)[0]), checked, worst, viol)
    return out


def gaussian_moment_selftest(grid: WavenumberGrid, nu_td: float, d: int, T: float) -> tuple[float, float]:
    """Grid quadrature of ||kappa^d exp(-nu_td kappa^2 (1+T))||_L2 vs the Gamma-function value."""
    k = grid.kappa
    f = np.abs(k) ** d * np.exp(-nu_td * k * k * (1 + T))
    quad = float(np.sqrt(grid.dkappa * np.sum(f * f)))
    C = np.sqrt(gamma_fn(d + 0.5)) * (2 * nu_td) ** (-0.5 * d - 0.25)
    return quad, float(C * (1 + T) ** (-0.5 * d - 0.25))


# ------------------------------------------------------- cross-checks

def remainder_moments(state: FieldState, nu_td: float, N: int) -> np.ndarray:
    """X-moments j = 0..N of every modal component of u - u_app; shape (M+1, N+1)."""
    basis = HermiteBasis(nu_td, N)
    u = state.physical()
    X = state.grid.X
    lm = decompose(to_similarity(u, X, state.T, nu_td), basis)
    rem = u - assemble_uapp(lm.alpha, lm.beta, lm.gamma, basis, state.T, X)
    P = X[None, :] ** np.arange(N + 1)[:, None]
    return state.grid.h * rem @ P.T


def low_mode_crosscheck(states: list[FieldState], field, nu_td: float, N: int) -> float:
    """Largest deviation between projected (alpha, beta, gamma) and the integrated low-mode ODE."""
    from .manifold import integrate_low_modes

    basis = HermiteBasis(nu_td, N)
    lms = [decompose(to_similarity(s.physical(), s.grid.X, s.T, nu_td), basis) for s in states]
    T = np.array([s.T for s in states])
    al, be, ga = integrate_low_modes(field, lms[0].alpha, lms[0].beta, lms[0].gamma, T)
    dev = 0.0
    for j, lm in enumerate(lms):
        dev = max(dev, np.abs(al[j] - lm.alpha).max(), np.abs(be[j] - lm.beta).max(),
                  np.abs(ga[j] - lm.gamma).max() if lm.gamma.size else 0.0)
    return float(dev)
