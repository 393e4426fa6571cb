"""Neumann eigenbasis of the pipe cross-section and shear decomposition.

All cross-sections have unit measure so that the constant mode is exactly 1
and every other retained eigenfunction is orthonormal to it.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from math import ceil
from typing import Callable, Sequence

import numpy as np

GRAM_TOL = 1e-10
EXPLICIT_GRAM_TOL = 1e-8
PANEL = 16

FAMILIES = ("interval", "rectangle", "explicit")


@dataclass(frozen=True)
class CrossSectionSpec:
    family: str = "interval"
    modes: int = 16
    resolution: int | None = None
    aspect: float = 1.0  # rectangle side ratio Ly/Lz, area fixed to 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown cross-section family {self.family!r}")
        if int(self.modes) != self.modes or self.modes < 1:
            raise ValueError("truncation M must be a positive integer")
        if self.resolution is not None and self.resolution < 4 * self.modes:
            raise ValueError(
                f"quadrature resolution {self.resolution} below 4*M = {4 * self.modes}")
        if self.aspect <= 0:
            raise ValueError("rectangle aspect ratio must be positive")


@dataclass(frozen=True, eq=False)
class CrossSectionSpectrum:
    """Retained Neumann eigenpairs (constant mode excluded) with quadrature data."""
    family: str
    mu: np.ndarray          # (M,)
    nodes: np.ndarray       # (Q, d)
    weights: np.ndarray     # (Q,)
    psi: np.ndarray         # (M, Q) eigenfunction values at the nodes
    labels: tuple = ()
    sides: tuple = ()
    _evaluator: Callable | None = field(default=None, repr=False)

    @property
    def modes(self) -> int:
        return len(self.mu)

    @property
    def mu1(self) -> float:
        return float(self.mu[0])

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.sum(self.weights * f * g))

    def gram(self) -> np.ndarray:
        """Quadrature Gram matrix of (psi_0 = 1, psi_1, ..., psi_M)."""
        full = np.vstack([np.ones(len(self.weights)), self.psi])
        return (full * self.weights) @ full.T

    def evaluate(self, n: int, points) -> np.ndarray:
        """psi_n at arbitrary points (n = 0 is the constant mode)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.nodes.shape[1])
        if n == 0:
            return np.ones(len(pts))
        if self._evaluator is None:
            # explicit data only known at the nodes
            idx = _match_nodes(self.nodes, pts)
            return self.psi[n - 1, idx]
        return self._evaluator(n, pts)


def _gauss_legendre_composite(n_points: int, a: float, b: float):
    per = min(n_points, PANEL)
    panels = max(1, ceil(n_points / per))
    x, w = np.polynomial.legendre.leggauss(per)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _default_resolution(max_index: int, modes: int) -> int:
    n = max(4 * modes, 8 * max_index + 32)
    return PANEL * ceil(n / PANEL)


def _rectangle_modes(M: int, Ly: float, Lz: float):
    cand = []
    for p in range(M + 1):
        for q in range(M + 1):
            if p == q == 0:
                continue
            cand.append((np.pi ** 2 * ((p / Ly) ** 2 + (q / Lz) ** 2), p, q))
    cand.sort()
    return cand[:M]


def build_spectrum(spec: CrossSectionSpec, data: dict | None = None) -> CrossSectionSpectrum:
    """Eigenpairs for the chosen family; ``data`` is required for explicit spectra."""
    M = spec.modes
    if spec.family == "explicit":
        if data is None:
            raise ValueError("explicit family requires spectral data")
        return explicit_spectrum(**data)

    if spec.family == "interval":
        res = spec.resolution or _default_resolution(M, M)
        y, w = _gauss_legendre_composite(res, 0.0, 1.0)
        n = np.arange(1, M + 1)

        def ev(k, pts):
            return np.sqrt(2.0) * np.cos(k * np.pi * pts[:, 0])

        psi = np.sqrt(2.0) * np.cos(np.outer(n, np.pi * y))
        sp = CrossSectionSpectrum("interval", (n * np.pi) ** 2 * 1.0, y[:, None], w, psi,
                                  labels=tuple((int(k),) for k in n), sides=(1.0,), _evaluator=ev)
    else:
        Ly = float(np.sqrt(spec.aspect))
        Lz = 1.0 / Ly
        modes = _rectangle_modes(M, Ly, Lz)
        pmax = max(max(p, q) for _, p, q in modes)
        res = spec.resolution or _default_resolution(pmax, M)
        y, wy = _gauss_legendre_composite(res, 0.0, Ly)
        z, wz = _gauss_legendre_composite(res, 0.0, Lz)
        Y, Z = np.meshgrid(y, z, indexing="ij")
        nodes = np.column_stack([Y.ravel(), Z.ravel()])
        w = np.outer(wy, wz).ravel()
        labels = tuple((p, q) for _, p, q in modes)
        mu = np.array([m for m, _, _ in modes])

        def ev(k, pts):
            p, q = labels[k - 1]
            cp = np.sqrt(2.0) if p else 1.0
            cq = np.sqrt(2.0) if q else 1.0
            return cp * cq * np.cos(p * np.pi * pts[:, 0] / Ly) * np.cos(q * np.pi * pts[:, 1] / Lz)

        psi = np.array([ev(k, nodes) for k in range(1, M + 1)])
        sp = CrossSectionSpectrum("rectangle", mu, nodes, w, psi, labels=labels,
                                  sides=(Ly, Lz), _evaluator=ev)

    defect = np.max(np.abs(sp.gram() - np.eye(M + 1)))
    if defect > GRAM_TOL:
        raise ValueError(f"quadrature too coarse: Gram defect {defect:.2e} > {GRAM_TOL:g}")
    return sp


def explicit_spectrum(mu, nodes, weights, psi) -> CrossSectionSpectrum:
    mu = np.asarray(mu, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim == 1:
        nodes = nodes[:, None]
    weights = np.asarray(weights, dtype=float)
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    if psi.shape != (len(mu), len(weights)) or len(nodes) != len(weights):
        raise ValueError("explicit spectral data has inconsistent shapes")
    if np.any(mu <= 0) or np.any(np.diff(mu) < 0):
        raise ValueError("eigenvalues must be positive and ascending")
    if abs(weights.sum() - 1.0) > EXPLICIT_GRAM_TOL:
        raise ValueError("cross-section must have unit measure")
    sp = CrossSectionSpectrum("explicit", mu, nodes, weights, psi,
                              labels=tuple((k,) for k in range(1, len(mu) + 1)))
    defect = np.max(np.abs(sp.gram() - np.eye(len(mu) + 1)))
    if defect > EXPLICIT_GRAM_TOL:
        raise ValueError(f"explicit eigenfunctions not orthonormal (Gram defect {defect:.2e})")
    return sp


def _match_nodes(nodes, pts, tol=1e-12):
    idx = []
    for p in pts:
        d = np.max(np.abs(nodes - p), axis=1)
        j = int(np.argmin(d))
        if d[j] > tol:
            raise ValueError(f"point {p} is not a quadrature node")
        idx.append(j)
    return np.array(idx)


@dataclass(frozen=True, eq=False)
class ShearField:
    A: float
    chi: np.ndarray        # (M,) chi_n = <chi, psi_n>
    coupling: np.ndarray   # (M, M) chi_{n,m} = <psi_n, chi psi_m>
    mu: np.ndarray         # (M,) eigenvalues the coefficients refer to
    chi_sup: float

    def __post_init__(self):
        c = self.coupling
        if c.shape != (len(self.chi), len(self.chi)) or len(self.mu) != len(self.chi):
            raise ValueError("shear field dimensions inconsistent")
        if not np.allclose(c, c.T, atol=1e-12, rtol=0):
            raise ValueError("coupling table must be symmetric")
        # exact symmetry for downstream Hermitian structure
        object.__setattr__(self, "coupling", 0.5 * (c + c.T))

    @property
    def modes(self) -> int:
        return len(self.chi)

    @property
    def mu_norm_sq(self) -> float:
        return float(np.sum(self.chi ** 2 / self.mu))

    @property
    def D_td(self) -> float:
        return self.A ** 2 * self.mu_norm_sq

    @property
    def chi_l2(self) -> float:
        return float(np.linalg.norm(self.chi))

    @property
    def is_trivial(self) -> bool:
        return not np.any(self.chi)

    def to_json(self) -> dict:
        return {"A": self.A, "mu": self.mu.tolist(), "chi": self.chi.tolist(),
                "coupling": self.coupling.tolist(), "chi_sup": self.chi_sup}


# ---------------------------------------------------------------- profiles

def profile_plug(level: float = 1.0):
    return lambda pts: np.full(len(pts), float(level))


def profile_cosine(amplitudes: Sequence[float] = (1.0,), mean: float = 1.0, side: float = 1.0):
    """mean + sum_k a_k cos(k pi y / side), varying in the first coordinate only."""
    amps = [float(a) for a in amplitudes]

    def f(pts):
        y = pts[:, 0]
        out = np.full(len(y), float(mean))
        for k, a in enumerate(amps, start=1):
            out += a * np.cos(k * np.pi * y / side)
        return out
    return f


def profile_poiseuille(mean: float = 1.0, sides: Sequence[float] = (1.0,)):
    """Parabolic channel profile (product of parabolas on a rectangle) with given mean."""
    def f(pts):
        out = np.full(len(pts), float(mean))
        for j, L in enumerate(sides):
            s = pts[:, j] / L
            out = out * 6.0 * s * (1.0 - s)
        return out
    return f


def profile_couette(mean: float = 1.0, side: float = 1.0):
    return lambda pts: 2.0 * mean * pts[:, 0] / side


def named_profile(name: str, spectrum: CrossSectionSpectrum, **params) -> Callable:
    sides = spectrum.sides or (1.0,)
    if name == "plug":
        return profile_plug(params.get("level", 1.0))
    if name == "cosine":
        return profile_cosine(params.get("amplitudes", (1.0,)), params.get("mean", 1.0), sides[0])
    if name == "poiseuille":
        return profile_poiseuille(params.get("mean", 1.0), sides)
    if name == "couette":
        return profile_couette(params.get("mean", 1.0), sides[0])
    raise ValueError(f"unknown shear profile {name!r}")


def profile_from_csv(path, spectrum: CrossSectionSpectrum) -> np.ndarray:
    """Read (node coordinates..., value) rows and align them with the quadrature nodes."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                continue  # header
    arr = np.array(rows)
    d = spectrum.nodes.shape[1]
    if arr.ndim != 2 or arr.shape[1] != d + 1:
        raise ValueError(f"profile CSV must have {d} coordinate column(s) plus a value column")
    if len(arr) != len(spectrum.weights):
        raise ValueError("profile CSV does not cover the quadrature grid")
    idx = _match_nodes(arr[:, :d], spectrum.nodes, tol=1e-10)
    return arr[idx, d]


def field_from_spectral_json(path_or_dict, A: float = 1.0) -> ShearField:
    """ShearField straight from {mu, chi, coupling} data (unit-measure normalization)."""
    if isinstance(path_or_dict, dict):
        d = path_or_dict
    else:
        with open(path_or_dict) as fh:
            d = json.load(fh)
    mu = np.asarray(d["mu"], dtype=float)
    chi = np.asarray(d["chi"], dtype=float)
    coupling = np.asarray(d["coupling"], dtype=float)
    if np.any(mu <= 0) or np.any(np.diff(mu) < 0):
        raise ValueError("eigenvalues must be positive and ascending")
    A = float(d.get("A", A))
    # without pointwise data the sup norm is bounded below by the coupling norm
    sup = float(d.get("chi_sup", np.linalg.norm(coupling, 2) if coupling.size else 0.0))
    return ShearField(A, chi, coupling, mu, sup)


# -------------------------------------------------------------- operations

def decompose_shear(profile, spectrum: CrossSectionSpectrum, sup_samples: int = 4001) -> ShearField:
    """Split V = A(1 + chi) and project chi on the retained modes."""
    if callable(profile):
        V = np.asarray(profile(spectrum.nodes), dtype=float)
    else:
        V = np.asarray(profile, dtype=float)
    if V.shape != spectrum.weights.shape:
        raise ValueError("profile must be given on the quadrature nodes")
    A = float(np.sum(spectrum.weights * V))
    if abs(A) < 1e-12:
        raise ValueError("zero-mean profile: Taylor mechanism degenerate")
    chi_vals = V / A - 1.0
    chi_vals = chi_vals - np.sum(spectrum.weights * chi_vals)   # enforce chi_0 = 0 exactly
    wpsi = spectrum.psi * spectrum.weights
    chi = wpsi @ chi_vals
    coupling = (wpsi * chi_vals) @ spectrum.psi.T
    chi[np.abs(chi) < 1e-15] = 0.0
    coupling[np.abs(coupling) < 1e-15] = 0.0
    sup = float(np.max(np.abs(chi_vals)))
    if callable(profile) and spectrum.sides:
        grids = np.meshgrid(*[np.linspace(0, L, sup_samples if len(spectrum.sides) == 1 else 401)
                              for L in spectrum.sides], indexing="ij")
        pts = np.column_stack([g.ravel() for g in grids])
        sup = max(sup, float(np.max(np.abs(np.asarray(profile(pts)) / A - 1.0))))
    return ShearField(A, chi, coupling, spectrum.mu.copy(), sup)


def taylor_viscosity(nu: float, field: ShearField) -> float:
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    return nu ** 2 + field.D_td


def dispersion_r(field: ShearField, spectrum: CrossSectionSpectrum | None = None) -> float:
    """Cubic coefficient r in lambda_0 = -nu_td k^2 + i r k^3 + O(k^4)."""
    q = field.chi / field.mu
    return float(-field.A ** 3 * q @ field.coupling @ q)


def operator_norm_bounds(field: ShearField, spectrum: CrossSectionSpectrum | None = None):
    """(||Upsilon^-1||, ||chi~||) on the truncated l2."""
    b_ups = 1.0 / float(field.mu[0])
    b_chi = float(np.linalg.norm(field.coupling, 2)) if field.modes else 0.0
    if b_chi > field.chi_sup + 1e-8:
        raise AssertionError(
            f"coupling norm {b_chi:.3e} exceeds sup|chi| = {field.chi_sup:.3e}: inconsistent decomposition")
    return b_ups, b_chi


def resynthesize(field: ShearField, spectrum: CrossSectionSpectrum) -> np.ndarray:
    return field.A * (1.0 + field.chi @ spectrum.psi)
