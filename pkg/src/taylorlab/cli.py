"""taylor-lab command line: spectrum | dispersion | manifold | hypo | all."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import evolution as ev
from .config import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, ConfigError, RunConfig, load_config
from .cross_section import dispersion_r, taylor_viscosity
from .hypocoercivity import (band_samples, build_certificate, certify_band, metric,
                             norm_decay_conclusion, phi_decay_check)
from .manifold import (attraction_test, compute_coefficients, invariance_residual,
                       random_full_state, reduced_decay_test)
from .modal_operator import assemble
from .spectral import (abscissa, default_kappa0, perturbation_coefficients, separation_check,
                       sweep_table)
from .svgplot import Plot

COMMANDS = ("spectrum", "dispersion", "manifold", "hypo")


# ------------------------------------------------------------------ output

def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, float) and not np.isfinite(o):
        return str(o)
    return o


def tag(nu: float) -> str:
    return f"nu{nu:g}"


class Run:
    """Collects assertion verdicts and constants for one command."""

    def __init__(self, name: str, cfg: RunConfig, outdir: Path):
        self.name, self.cfg, self.dir = name, cfg, outdir
        self.assertions: list[dict] = []
        self.constants: dict = {}
        outdir.mkdir(parents=True, exist_ok=True)

    def check(self, name: str, passed: bool, gating: bool = True, **detail) -> bool:
        self.assertions.append({"name": name, "passed": bool(passed), "gating": gating, **detail})
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions if a["gating"])

    def finish(self) -> int:
        write_json(self.dir / "manifest.json", {
            "command": self.name,
            "config_sha256": self.cfg.digest(),
            "seed": self.cfg["seed"],
            "constants": self.constants,
            "assertions": self.assertions,
            "passed": self.passed,
        })
        with open(self.dir / "config.yaml", "w") as fh:
            fh.write(self.cfg.to_yaml())
        return EXIT_PASS if self.passed else EXIT_FAIL


def constants_for(field, nu, cfg: RunConfig) -> dict:
    out = {"nu": nu, "nu_td": taylor_viscosity(nu, field), "D_td": field.D_td, "r": dispersion_r(field),
           "kappa0": default_kappa0(field) if cfg["hypo"]["kappa0"] is None else cfg["hypo"]["kappa0"]}
    try:
        cert = build_certificate(field, nu, cfg["hypo"]["kappa0"], cfg["hypo"]["delta"], cfg["hypo"]["kappa1"])
        out.update(M_tilde=cert.M_tilde, M_tilde_corrected=cert.M_tilde_corrected, M_check=cert.M_check)
    except ValueError as exc:
        out["certificate"] = str(exc)
    return out


# ----------------------------------------------------------------- spectrum

def cmd_spectrum(cfg: RunConfig, run: Run) -> None:
    sp = cfg.spectrum()
    field = cfg.shear(sp)
    mu1 = float(field.mu[0])
    for nu in cfg.nus:
        op = assemble(field, nu)
        run.constants[tag(nu)] = constants_for(field, nu, cfg)
        k0 = run.constants[tag(nu)]["kappa0"]
        kmax = cfg["spectrum"]["kappa_max"] or cfg["hypo"]["kappa1"] / nu
        kap = np.linspace(-kmax, kmax, int(cfg["spectrum"]["points"]))
        tab = sweep_table(op, kap)
        M1 = op.size
        header = (["kappa [1/X]"] + [f"re_lambda_{j} [1/T]" for j in range(M1)]
                  + [f"im_lambda_{j} [1/T]" for j in range(M1)] + ["gap [1/T]"])
        write_csv(run.dir / f"spectrum_{tag(nu)}.csv", header, tab)
        excess = float(np.max(abscissa(op, kap) + nu ** 2 * kap ** 2))
        run.check(f"{tag(nu)}: Re lambda <= -nu^2 kappa^2 + 1e-9", excess <= 1e-9, max_excess=excess)

        sep = separation_check(op, k0, mu1, field, points=int(cfg["spectrum"]["separation_points"]))
        write_json(run.dir / f"separation_{tag(nu)}.json", sep.to_json())
        run.check(f"{tag(nu)}: spectral separation on |kappa| <= kappa0", sep.passed,
                  leading_margin=sep.leading_margin, rest_margin=sep.rest_margin)

        try:
            rep = perturbation_coefficients(op, field)
            pj = rep.to_json()
            pj["status"] = "ok"
            e2 = abs(rep.quadratic + rep.nu_td)
            e3 = abs(rep.Gamma3_imag - rep.r)
            pj.update(quadratic_error=e2, cubic_error=e3)
            run.check(f"{tag(nu)}: quadratic coefficient = -nu_td within 1e-6", e2 <= 1e-6, error=e2)
            run.check(f"{tag(nu)}: cubic coefficient = r within 1e-6", e3 <= 1e-6, error=e3)
        except ValueError as exc:
            pj = {"status": str(exc)}
        write_json(run.dir / f"perturbation_{tag(nu)}.json", pj)

        p = Plot(f"Re lambda_j(kappa), nu = {nu:g}", "kappa", "Re lambda")
        for j in range(min(M1, 6)):
            p.line(tab[:, 0], tab[:, 1 + j], f"j = {j}")
        nutd = taylor_viscosity(nu, field)
        fine = np.linspace(-kmax, kmax, 401)
        par = -nutd * fine ** 2
        keep = par >= tab[:, 1:1 + M1].min()
        p.line(fine[keep], par[keep], "-nu_td kappa^2", dashed=True, color="#000000")
        p.save(run.dir / f"spectrum_{tag(nu)}.svg")


# --------------------------------------------------------------- dispersion

def cmd_dispersion(cfg: RunConfig, run: Run) -> None:
    sp = cfg.spectrum()
    field = cfg.shear(sp)
    M = field.modes
    ic, tm, gr, dp, hy = cfg["initial"], cfg["time"], cfg["grid"], cfg["dispersion"], cfg["hypo"]
    N = int(dp["N"])
    par = int(cfg["parallel"])
    summary = []
    for nu in cfg.nus:
        run.constants[tag(nu)] = constants_for(field, nu, cfg)
        nutd = taylor_viscosity(nu, field)
        op = assemble(field, nu)
        T_max = float(tm["T_max"])
        L = gr["extent"] or ev.auto_extent(nutd, T_max, ic["width"], ic["shift"])
        grid = ev.make_grid(int(gr["K"]), L)
        cert = build_certificate(field, nu, hy["kappa0"], hy["delta"], hy["kappa1"])
        try:
            grid.classify(cert.kappa0, cert.kappa1, nu)
        except ev.GridError as exc:
            run.check(f"{tag(nu)}: grid resolves all three regimes", False, diagnostics=str(exc),
                      K=grid.K, extent=L, kappa_max=grid.kappa_max)
            continue
        s0 = ev.initialize(ic["kind"], grid, M, mass=ic["mass"], width=ic["width"], shift=ic["shift"],
                           modulation=ic["modulation"], nu_td=nutd)
        T = ev.time_schedule(float(tm["T0"]), T_max, float(tm["ratio"]))
        states = ev.evolve_series(s0, op, T, par)

        mass = max(abs(s.U[0, 0] - s0.U[0, 0]) for s in states)
        real = max(s.reality_defect() for s in states)
        run.check(f"{tag(nu)}: mass conserved within 1e-10", mass <= 1e-10, defect=mass)
        run.check(f"{tag(nu)}: reality symmetry within 1e-10", real <= 1e-10, defect=real)

        try:
            dr = ev.effective_diffusivity(states, dp["moments"])
        except ev.GridError as exc:
            run.check(f"{tag(nu)}: variance monotone", False, diagnostics=str(exc))
            continue
        rel = abs(dr.asymptote / nutd - 1)
        run.check(f"{tag(nu)}: D_eff asymptote = nu_td within 2%", rel <= 0.02,
                  D_eff=dr.asymptote, nu_td=nutd, rel_error=rel)

        gd = np.array([ev.gaussian_compare(s, s0.mass, nutd) if s.T > 0 else np.nan for s in states])
        un = [ev.gaussian_compare_unscaled(s, nu, field.D_td) if s.T > 0 else (0.0, np.nan) for s in states]
        scaled = gd * (1 + T) ** 0.75
        dec = T >= T[-1] / 10
        # bounded: the compensated distance does not grow over the final decade
        gslope = float(np.polyfit(np.log1p(T[dec]), np.log(scaled[dec]), 1)[0])
        run.check(f"{tag(nu)}: Gaussian distance x (1+T)^(3/4) bounded on final decade", gslope <= 0.05,
                  compensated_slope=gslope, sup=float(np.nanmax(scaled[dec])))

        rem = ev.remainder_decay(states, nutd, N)
        run.check(f"{tag(nu)}: remainder slope <= -(N/6+1/12) + 0.1 (N={N})", rem.passed,
                  slope=rem.slope, bound=rem.bound, status=rem.status)
        mom = float(np.max(np.abs(ev.remainder_moments(s0, nutd, N))))
        run.check(f"{tag(nu)}: T=0 remainder moments <= 1e-7", mom <= 1e-7, max_moment=mom)
        lm_dev = ev.low_mode_crosscheck(states, field, nutd, N)
        run.check(f"{tag(nu)}: projected low modes match low-mode ODE", lm_dev <= 1e-7, deviation=lm_dev)

        regimes = ev.regime_decay_check(states, op, cert.kappa0, cert.kappa1, cert.rate(hy["rate"]),
                                        cert.mu1)
        for name, rr in regimes.items():
            run.check(f"{tag(nu)}: {name}-band decay", rr.passed, nodes=rr.nodes, checked=rr.checked,
                      worst_margin=rr.worst_margin, violations=rr.violations[:10])
        if hy["rate"] != "uncorrected":
            unc = ev.regime_decay_check(states, op, cert.kappa0, cert.kappa1, cert.M_tilde, cert.mu1)
            pi = unc["intermediate"]
            run.check(f"{tag(nu)}: intermediate-band decay at the uncorrected rate", pi.passed, gating=False,
                      rate=cert.M_tilde, worst_margin=pi.worst_margin, violations=len(pi.violations))

        rows = [(T[j], dr.var[j], dr.D_eff[j], rem.norms[j], gd[j], scaled[j], un[j][0], un[j][1])
                for j in range(len(T))]
        write_csv(run.dir / f"timeseries_{tag(nu)}.csv",
                  ["T [scaled]", "Var [X^2]", "D_eff [X^2/T]", "u_rem_L2", "gauss_dist_L2",
                   "gauss_dist_x_(1+T)^0.75", "t [unscaled]", "gauss_dist_unscaled_L2"], rows)
        snap = states[-1].physical()
        write_csv(run.dir / f"snapshot_{tag(nu)}.csv",
                  ["X [scaled]"] + [f"u_{n}" for n in range(M + 1)],
                  np.column_stack([grid.X, snap.T]))
        summary.append((nu, nu ** 2, nutd, dr.asymptote, rel))

        pos = T > 0
        p = Plot(f"Effective diffusivity, nu = {nu:g}", "T", "D_eff", xlog=True)
        p.line(T[pos], dr.D_eff[pos], "D_eff(T)")
        p.line(T[pos], np.full(pos.sum(), nutd), "nu_td", dashed=True, color="#000000")
        p.save(run.dir / f"deff_{tag(nu)}.svg")
        p = Plot(f"Decay rates, nu = {nu:g}", "1+T", "L2 norm", xlog=True, ylog=True)
        p.line(1 + T[pos], gd[pos], "Gaussian distance")
        p.line(1 + T[pos], rem.norms[pos], "remainder")
        p.reference_slope(1 + T[pos], -0.75, 1 + T[pos][0], gd[pos][0], "(1+T)^-3/4")
        p.reference_slope(1 + T[pos], rem.bound - 0.1, 1 + T[pos][0], rem.norms[pos][0],
                          f"(1+T)^-{N / 6 + 1 / 12:.3g}")
        p.save(run.dir / f"decay_{tag(nu)}.svg")

    if len(summary) > 1:
        base = summary[0]
        rows = []
        for nu, n2, nutd, D, rel in summary:
            dD = D - base[3]
            dn = n2 - base[1]
            rows.append((nu, nutd, D, rel, dn, dD))
            if nu != base[0]:
                srel = abs(dD / dn - 1)
                run.check(f"{tag(nu)}: D_eff shift = nu^2 shift within 2%", srel <= 0.02, rel_error=srel)
        write_csv(run.dir / "nu_comparison.csv",
                  ["nu", "nu_td", "D_eff", "rel_error", "nu^2 - nu_ref^2", "D_eff - D_eff_ref"], rows)


# ----------------------------------------------------------------- manifold

def cmd_manifold(cfg: RunConfig, run: Run) -> None:
    sp = cfg.spectrum()
    field = cfg.shear(sp)
    mc = cfg["manifold"]
    N = int(mc["order"])
    rng = np.random.default_rng(int(cfg["seed"]))
    tables = {}
    for nu in cfg.nus:
        run.constants[tag(nu)] = constants_for(field, nu, cfg)
        coeffs = compute_coefficients(field, N)
        tables[nu] = coeffs.to_json()
        with open(run.dir / f"coefficients_{tag(nu)}.json", "w") as fh:
            fh.write(tables[nu] + "\n")
    coeffs = compute_coefficients(field, N)
    blobs = set(tables.values())
    run.check("coefficient tables identical across nu", len(blobs) == 1, count=len(tables))
    write_csv(run.dir / "coefficients.csv", ["k", "i", "n", "C"],
              [(k, i, n + 1, coeffs.C[k, i, n]) for k in range(1, N + 1) for i in range(k)
               for n in range(field.modes)])

    rows = []
    for p in range(int(mc["probes"])):
        a = rng.standard_normal(N + 1)
        s = float(rng.uniform(0.0, 1.0))
        rows.append((p, s, invariance_residual(coeffs, field, a, s)))
    worst = max(r[2] for r in rows)
    write_csv(run.dir / "invariance.csv", ["probe", "sigma", "residual"], rows)
    run.check("invariance residual <= 1e-9", worst <= 1e-9, max_residual=worst)

    p = Plot("Distance to the manifold", "T", "||b_k - h_k||", ylog=True)
    env_rows = []
    for j in range(int(mc["trajectories"])):
        init = random_full_state(N, field.modes, rng)
        rep = attraction_test(field, coeffs, init)
        run.check(f"trajectory {j}: attraction envelope bounded", rep.passed,
                  sup_ratio=rep.sup_ratio, raw_deviation=rep.raw_deviation)
        for i, t in enumerate(rep.times):
            env_rows.append((j, t, *rep.norms[i], *rep.ratios[i]))
        if j == 0:
            for k in range(N + 1):
                p.line(rep.times, rep.norms[:, k], f"k = {k}")
    write_csv(run.dir / "attraction.csv",
              ["trajectory", "T [scaled]"] + [f"norm_B{k}" for k in range(N + 1)]
              + [f"ratio_B{k}" for k in range(N + 1)], env_rows)
    p.save(run.dir / "attraction.svg")

    dec = reduced_decay_test(coeffs, field, np.ones(N + 1), tau_max=float(mc["tau_max"]))
    run.check("on-manifold decay rates and closed forms", dec.passed, slopes=dec.slopes,
              bounds=dec.bounds, closed_form_error=dec.closed_form_error, failures=dec.failures)
    write_csv(run.dir / "reduced_decay.csv", ["tau"] + [f"a_{k}" for k in range(N + 1)],
              np.column_stack([dec.tau, dec.a]))


# --------------------------------------------------------------------- hypo

def cmd_hypo(cfg: RunConfig, run: Run) -> None:
    sp = cfg.spectrum()
    field = cfg.shear(sp)
    hy = cfg["hypo"]
    rng = np.random.default_rng(int(cfg["seed"]))
    nus = [float(v) for v in hy["nu"]]
    rates = {}
    trace_rows, margin_rows = [], []
    p = Plot("Phi decay at band samples", "T", "Phi / Phi(0)", ylog=True)
    for nu in nus:
        cert = build_certificate(field, nu, hy["kappa0"], hy["delta"], hy["kappa1"])
        run.constants[tag(nu)] = constants_for(field, nu, cfg)
        write_json(run.dir / f"certificate_{tag(nu)}.json", cert.to_json())
        op = assemble(field, nu)
        rates[nu] = (cert.M_tilde, cert.M_tilde_corrected)
        kap = band_samples(cert, int(hy["samples"]))
        M1 = op.size
        ok_sel = ok_unc = ok_norm = True
        for j, k in enumerate(kap):
            W0 = rng.standard_normal(M1) + 1j * rng.standard_normal(M1)
            tr = phi_decay_check(op, cert, k, W0, T_max=float(hy["T_max"]), rate=hy["rate"])
            nd = norm_decay_conclusion(cert, tr)
            ok_sel &= tr.passed
            ok_norm &= nd.passed
            unc = tr if hy["rate"] == "uncorrected" else phi_decay_check(op, cert, k, W0, T_max=float(hy["T_max"]))
            ok_unc &= unc.passed
            margin_rows.append((nu, k, tr.rate, tr.phi_margin, tr.dphi_margin, nd.worst_margin,
                                unc.phi_margin, unc.dphi_margin, tr.improvement))
            if j in (0, len(kap) - 1):
                for i in range(0, len(tr.T), 10):
                    trace_rows.append((nu, k, tr.T[i], tr.Phi[i], tr.bound[i], tr.dPhi[i], tr.norm_sq[i]))
                if nu == nus[-1]:
                    p.line(tr.T, tr.Phi / tr.Phi[0], f"kappa = {k:.3g}")
                    p.line(tr.T, tr.bound / tr.Phi[0], "", dashed=True)
        run.check(f"{tag(nu)}: Phi decay at rate {hy['rate']} on all band samples", ok_sel,
                  rate=cert.rate(hy["rate"]))
        run.check(f"{tag(nu)}: ||W||^2 <= 4 exp(-rate T) ||W0||^2", ok_norm)
        if hy["rate"] != "uncorrected":
            run.check(f"{tag(nu)}: Phi decay at the uncorrected rate", ok_unc, gating=False,
                      rate=cert.M_tilde)
        bc = certify_band(cert, op, kap)
        run.check(f"{tag(nu)}: exact decay rate of Phi >= selected rate over the band",
                  bool(np.all(bc.decay_rate >= cert.rate(hy["rate"]))), min_rate=float(bc.decay_rate.min()))
        lo_m, hi_m = np.inf, np.inf
        for _ in range(int(hy["probes"])):
            k = float(rng.uniform(*cert.band))
            W = rng.standard_normal(M1) + 1j * rng.standard_normal(M1)
            G = metric(cert, k)
            ph = float(np.real(np.vdot(W, G @ W)))
            n2 = float(np.vdot(W, W).real)
            lo_m = min(lo_m, ph - 0.5 * n2)
            hi_m = min(hi_m, cert.M_check * n2 - ph)
        run.check(f"{tag(nu)}: norm equivalence 1/2 ||W||^2 <= Phi <= M_check ||W||^2",
                  lo_m >= 0 and hi_m >= 0, lower_margin=lo_m, upper_margin=hi_m)
    run.check("rates identical across nu", len(set(rates.values())) == 1, rates=rates)
    write_csv(run.dir / "hypo_margins.csv",
              ["nu", "kappa", "rate", "phi_margin", "dphi_margin", "norm_margin", "phi_margin_uncorrected",
               "dphi_margin_uncorrected", "improvement_over_energy_bound"], margin_rows)
    write_csv(run.dir / "hypo_traces.csv", ["nu", "kappa", "T [scaled]", "Phi", "bound", "dPhi_dT", "norm_sq"],
              trace_rows)
    p.save(run.dir / "hypo_phi.svg")


HANDLERS = {"spectrum": cmd_spectrum, "dispersion": cmd_dispersion, "manifold": cmd_manifold,
            "hypo": cmd_hypo}


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="taylor-lab", description="Taylor dispersion numerics toolkit")
    ap.add_argument("command", choices=COMMANDS + ("all",))
    ap.add_argument("--config", help="YAML run configuration")
    ap.add_argument("--out", help="output root directory")
    ap.add_argument("--nu", type=float, action="append", help="viscosity (repeatable)")
    ap.add_argument("--modes", type=int, help="cross-sectional truncation M")
    ap.add_argument("--order", type=int, help="center-manifold order N")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--parallel", type=int, help="worker threads for per-node propagation")
    return ap


def overrides_from(args) -> dict:
    o: dict = {}
    if args.nu:
        o["nu"] = list(args.nu)
    if args.modes is not None:
        o["cross_section"] = {"modes": args.modes}
    if args.order is not None:
        o["manifold"] = {"order": args.order}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.parallel is not None:
        o["parallel"] = args.parallel
    return o


def run_command(name: str, cfg: RunConfig, root: Path) -> int:
    run = Run(name, cfg, root / f"{name}-{cfg.digest()[:12]}")
    try:
        HANDLERS[name](cfg, run)
    except ValueError as exc:
        print(f"{name}: error: {exc}", file=sys.stderr)
        run.check("run completed", False, error=str(exc))
        run.finish()
        return EXIT_CONFIG
    code = run.finish()
    for a in run.assertions:
        mark = "PASS" if a["passed"] else ("FAIL" if a["gating"] else "info-FAIL")
        print(f"[{mark}] {name}: {a['name']}")
        if not a["passed"] and "diagnostics" in a:
            print(f"    {a['diagnostics']}")
    print(f"{name}: results in {run.dir}")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides_from(args))
    except (ConfigError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    root = Path(args.out or os.environ.get("TAYLOR_LAB_OUT") or cfg["out"])
    names = COMMANDS if args.command == "all" else (args.command,)
    codes = [run_command(n, cfg, root) for n in names]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
