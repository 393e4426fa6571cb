"""Spectrum of B(kappa), the leading eigenbranch and its small-kappa expansion."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import eig

from .cross_section import ShearField, dispersion_r, taylor_viscosity
from .modal_operator import ModalOperator, evaluate

COND_LIMIT = 1e8
AMBIGUITY = 1e-6


class BranchTrackingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralSlice:
    kappa: float
    eigenvalues: np.ndarray   # descending real part
    leading: complex
    projection: np.ndarray    # rank-one spectral projection of the leading eigenvalue
    gap: float
    index: int                # position of the leading eigenvalue in ``eigenvalues``
    right: np.ndarray         # unit right eigenvector of the leading eigenvalue
    condition: float

    @property
    def others(self) -> np.ndarray:
        return np.delete(self.eigenvalues, self.index)


def default_kappa0(field: ShearField) -> float:
    """90% of the largest wavenumber for which the separation argument applies."""
    mu1 = float(field.mu[0])
    if field.chi_sup == 0 or field.A == 0:
        return 0.5 * mu1
    return 0.9 * mu1 / (2.0 * abs(field.A) * field.chi_sup)


def _sorted_eig(B):
    w, vl, vr = eig(B, left=True, right=True)
    order = np.lexsort((-w.imag, -w.real))
    return w[order], vl[:, order], vr[:, order]


def _slice(kappa, w, vl, vr, j):
    r = vr[:, j] / np.linalg.norm(vr[:, j])
    l = vl[:, j] / np.linalg.norm(vl[:, j])
    s = np.vdot(l, r)
    cond = 1.0 / abs(s) if s != 0 else np.inf
    if cond > COND_LIMIT:
        raise BranchTrackingError(
            f"branch tracking unreliable at kappa={kappa:g}: eigenvector condition {cond:.2e}")
    P = np.outer(r, l.conj()) / s
    rest = np.delete(w.real, j)
    gap = float(w[j].real - rest.max()) if rest.size else np.inf
    return SpectralSlice(float(kappa), w, complex(w[j]), P, gap, int(j), r, float(cond))


def _pick(vr, ref, kappa):
    norms = np.linalg.norm(vr, axis=0)
    ov = np.abs(ref.conj() @ vr) / (norms * np.linalg.norm(ref))
    order = np.argsort(-ov, kind="stable")
    if len(ov) > 1 and ov[order[0]] - ov[order[1]] < AMBIGUITY:
        raise BranchTrackingError(
            f"overlap ambiguity at kappa={kappa:g}: candidates {order[0]} and {order[1]} "
            f"with overlaps {ov[order[0]]:.9f}, {ov[order[1]]:.9f}")
    return int(order[0])


def spectrum_at(op: ModalOperator, kappa: float, reference: np.ndarray | None = None) -> SpectralSlice:
    """Dense eigendecomposition; leading branch by overlap with ``reference`` (default e0)."""
    w, vl, vr = _sorted_eig(evaluate(op, kappa))
    if reference is None:
        reference = np.zeros(op.size)
        reference[0] = 1.0
    return _slice(kappa, w, vl, vr, _pick(vr, reference, kappa))


def leading_branch(op: ModalOperator, grid) -> list[SpectralSlice]:
    """Continue the leading branch outward from the node closest to kappa = 0."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")
    start = int(np.argmin(np.abs(grid)))
    out: list[SpectralSlice | None] = [None] * len(grid)
    out[start] = spectrum_at(op, grid[start])
    for direction in (1, -1):
        prev = out[start]
        i = start + direction
        while 0 <= i < len(grid):
            prev = spectrum_at(op, grid[i], reference=prev.right)
            out[i] = prev
            i += direction
    return out


@dataclass(frozen=True)
class PerturbationReport:
    Gamma2: float          # -D_td-consistent second-order coefficient of Gamma(kappa)
    quadratic: float       # kappa^2 coefficient of Re lambda_0 (expected -nu_td)
    Gamma3_imag: float     # kappa^3 coefficient of Im lambda_0 (expected r)
    Gamma1_imag: float     # linear coefficient of Im lambda_0 (expected 0)
    fit_residual: float
    kappa_fit: float
    nu_td: float
    r: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def perturbation_coefficients(op: ModalOperator, field: ShearField, kappa_fit: float | None = None,
                              tol: float = 1e-6, samples: int = 41, max_shrink: int = 6) -> PerturbationReport:
    """Least-squares fit of the leading eigenbranch near kappa = 0.

    Re lambda_0 is fitted by even powers k^2, k^4, k^6 and Im lambda_0 by odd
    powers k, k^3, k^5, k^7; the window shrinks until the model residual is
    below 10*tol*kappa_fit^2.
    """
    if field.is_trivial:
        raise ValueError("degenerate: no shear")
    if kappa_fit is None:
        kappa_fit = 0.05 * default_kappa0(field)
    for _ in range(max_shrink + 1):
        k = np.linspace(-kappa_fit, kappa_fit, samples)
        lam = np.array([s.leading for s in leading_branch(op, k)])
        Xr = np.column_stack([k ** 2, k ** 4, k ** 6])
        Xi = np.column_stack([k, k ** 3, k ** 5, k ** 7])
        cr = np.linalg.lstsq(Xr, lam.real, rcond=None)[0]
        ci = np.linalg.lstsq(Xi, lam.imag, rcond=None)[0]
        resid = float(max(np.max(np.abs(Xr @ cr - lam.real)), np.max(np.abs(Xi @ ci - lam.imag))))
        if resid <= 10 * tol * kappa_fit ** 2:
            break
        kappa_fit *= 0.5
    else:
        raise ValueError("window too wide or truncation too small")
    nu_td = taylor_viscosity(op.nu, field)
    return PerturbationReport(float(cr[0] - op.b2), float(cr[0]), float(ci[1]), float(ci[0]),
                              resid, float(kappa_fit), nu_td, dispersion_r(field))


@dataclass
class SeparationReport:
    kappa0: float
    mu1: float
    threshold: float
    leading_margin: float          # min over sweep of sqrt2*mu1/2 - |lambda0 + nu^2 k^2|
    rest_margin: float             # min over sweep of -mu1/2 - max Re(rest)
    leading_margin_alt: float      # same with nu k^2 in place of nu^2 k^2
    worst_kappa: float
    violations: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def separation_check(op: ModalOperator, kappa0: float, mu1: float, field: ShearField | None = None,
                     sweep=None, points: int = 65) -> SeparationReport:
    if field is not None and not field.is_trivial:
        limit = mu1 / (2.0 * abs(field.A) * field.chi_sup)
        if kappa0 >= limit:
            raise ValueError(f"kappa0={kappa0:g} violates the smallness condition kappa0 < {limit:g}")
    k = np.linspace(-kappa0, kappa0, points) if sweep is None else np.asarray(sweep, dtype=float)
    slices = leading_branch(op, k)
    thr = np.sqrt(2.0) * mu1 / 2
    lead_m = rest_m = alt_m = np.inf
    worst = float(k[0])
    viol = []
    for s in slices:
        kk = s.kappa
        d = abs(s.leading - op.b2 * kk * kk)
        d_alt = abs(s.leading + op.nu * kk * kk)
        rest = s.others
        r = -mu1 / 2 - (rest.real.max() if rest.size else -np.inf)
        if thr - d < lead_m:
            lead_m, worst = thr - d, kk
        rest_m = min(rest_m, r)
        alt_m = min(alt_m, thr - d_alt)
        if d > thr:
            viol.append({"kappa": kk, "kind": "leading", "value": complex(s.leading).__repr__()})
        if r < 0:
            j = int(np.argmax(rest.real))
            viol.append({"kappa": kk, "kind": "rest", "value": complex(rest[j]).__repr__()})
    return SeparationReport(float(kappa0), float(mu1), float(thr), float(lead_m), float(rest_m),
                            float(alt_m), worst, viol)


def sweep_table(op: ModalOperator, kappas) -> np.ndarray:
    """Rows kappa, Re lambda_j, Im lambda_j (descending real part), gap."""
    rows = []
    for k in kappas:
        w = _sorted_eig(evaluate(op, k))[0]
        rows.append(np.concatenate([[k], w.real, w.imag, [w[0].real - w[1].real]]))
    return np.array(rows)


def abscissa(op: ModalOperator, kappa) -> np.ndarray:
    """Largest real part of the spectrum at each wavenumber."""
    B = evaluate(op, np.atleast_1d(kappa))
    return np.linalg.eigvals(B).real.max(axis=-1)
