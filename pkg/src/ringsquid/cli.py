"""Command-line entry point: ``ringsquid <subcommand> [--config F] [--out D]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 analysis failure.  Every run writes ``manifest.json`` into the output
directory; on failure the files written so far are removed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fringes, gpe, io, plotting, studies
from .config import (DEFAULT_CONFIG_TEXT, Config, TargetTrapParams, load_config, make_grid,
                     parse_config_text, to_dimensionless)
from .errors import AnalysisError, ConfigError, NumericalError, ParameterError
from .expansion import build_initial_superposition, propagate_free_fft, timescales
from .imaging import DensityImage, column_density, convolve_airy
from .ring import solve_ground_state

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ANALYSIS = 0, 2, 3, 4
TWO_PI = 2 * math.pi

FIG2_KAPPAS = (0.4, 0.5, 0.51, 0.6)
FIG3_SIGMAS = (0.025, 0.05)  # sigma_R, sigma_S in units of r_S
FIG3_GRID = (8.0, 512)
FIG4_TIMES_MS = (10.0, 15.0, 20.0, 25.0)
FIG6_KAPPAS = (-0.4, -0.25, -0.1, 0.1, 0.25, 0.4)
FIG5_KAPPAS = (-0.25, 0.1, 0.4)
IMPRINT_TIME_MS = 17.0
# Sweep barrier as a fraction of the barrier-free chemical potential.
SWEEP_BARRIER_FRACTION = 0.8


@dataclass
class RunManifest:
    config_path: str | None
    subcommand: str
    outdir: str
    params_hash: str
    artifacts: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    steps: dict = field(default_factory=dict)
    effective_config: dict = field(default_factory=dict)


class Run:
    """Output bookkeeping for one invocation."""

    def __init__(self, subcommand, cfg: Config, outdir, config_path=None):
        self.outdir = Path(outdir)
        self.created_dir = not self.outdir.exists()
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.files = []
        self.steps = {}
        self.t0 = time.perf_counter()
        self.manifest = RunManifest(config_path=config_path, subcommand=subcommand,
                                    outdir=str(self.outdir), params_hash=cfg.trap.params_hash(),
                                    effective_config=cfg.effective())

    def path(self, name):
        p = self.outdir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def add(self, paths):
        self.files += [Path(p) for p in paths]

    def count(self, key, n=1):
        self.steps[key] = self.steps.get(key, 0) + n

    def save_image(self, img: DensityImage, name, **extra):
        paths = io.save_image(img, self.outdir / name, self.manifest.params_hash, **extra)
        self.add(paths)
        return paths[0]

    def write_csv(self, rows, name):
        fringes.write_report_csv(rows, self.path(name))

    def finish(self):
        m = self.manifest
        seen = []
        for p in self.files:
            if p.exists() and p not in seen:
                seen.append(p)
        m.artifacts = [{"path": str(p.relative_to(self.outdir)), "sha256": io.sha256(p)}
                       for p in seen]
        m.wall_clock_s = time.perf_counter() - self.t0
        m.steps = dict(self.steps)
        with open(self.outdir / "manifest.json", "w") as fh:
            json.dump(asdict(m), fh, indent=2, sort_keys=True, default=io._json_default)
        return m

    def cleanup(self):
        for p in self.files:
            if p.exists():
                p.unlink()
        if self.created_dir:
            # remove empty directories we made, deepest first
            for d in sorted((d for d in self.outdir.rglob("*") if d.is_dir()), reverse=True):
                if not any(d.iterdir()):
                    d.rmdir()
            if self.outdir.exists() and not any(self.outdir.iterdir()):
                self.outdir.rmdir()


# --------------------------------------------------------------------------
# helpers

def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _gpe_grid(cfg: Config):
    return make_grid(cfg.run.grid_extent / cfg.trap.r_S, cfg.run.grid_n)


def _dt(cfg: Config):
    return cfg.run.dt / cfg.trap.time_unit


def _phase_offset(cfg: Config):
    if cfg.run.randomize_phase:
        return float(np.random.default_rng(cfg.run.seed).uniform(0.0, TWO_PI))
    return cfg.run.phase_offset


def _ring_params(cfg: Config):
    d = to_dimensionless(cfg.trap)
    kappa = cfg.run.kappa if cfg.run.kappa is not None else d.kappa
    U = cfg.run.U if cfg.run.U is not None else d.U
    return kappa, U


def _ground(run: Run, p: TargetTrapParams, barrier: bool, checkpoint=None):
    grid = _gpe_grid(run.cfg)
    if checkpoint:
        return gpe.load_checkpoint(checkpoint, p, barrier=barrier)
    st = gpe.imaginary_time_ground_state(p, grid, barrier=barrier, tol=run.cfg.run.ground_tol)
    info = st.info.get("ground")
    run.count("ground_state_steps", info.steps if info else 0)
    return st


def _spacing_hint(p: TargetTrapParams, t):
    if p.scattering_length_a == 0:
        return studies.single_particle_window(t, to_dimensionless(p).sigma_S_hat)
    return studies.MF_SPACING_WINDOW


# --------------------------------------------------------------------------
# subcommands

def cmd_eigen(run: Run, args):
    kappa, U = _ring_params(run.cfg)
    kappas = _floats(args.kappas) if args.kappas else (kappa,)
    Us = _floats(args.U) if args.U else (U,)
    states, rows = [], []
    for u in Us:
        for k in kappas:
            st = solve_ground_state(k, u)
            run.count("eigen_solves")
            states.append(st)
            rows.append(st.summary())
    run.write_csv(rows, "eigen.csv")
    if len(states) <= 12:
        plotting.ring_states(states, run.path("eigen.png"))


def cmd_expand_sp(run: Run, args):
    kappa, U = _ring_params(run.cfg)
    d = to_dimensionless(run.cfg.trap)
    sig = (d.sigma_R_hat, d.sigma_S_hat)
    grid = _gpe_grid(run.cfg)
    if args.tau_c:
        times = [f * timescales(sig[1], 1.0).tau_C for f in _floats(args.tau_c)]
    else:
        times = [ts / d.time_unit for ts in run.cfg.run.expansion_times]
    _expand_sp(run, kappa, U, sig, grid, times, psf=args.psf, prefix="sp")


def _expand_sp(run: Run, kappa, U, sig, grid, times, psf=False, prefix="sp"):
    p = run.cfg.trap
    ring = solve_ground_state(kappa, U)
    psi = build_initial_superposition(sig, ring, grid)
    tau_C = timescales(sig[1], 1.0).tau_C
    rows, images = [], []
    for i, t in enumerate(times):
        img = column_density(propagate_free_fft(psi, t), p.r_S, p.time_unit)
        if psf:
            img = convolve_airy(img, run.cfg.run.psf_first_zero / p.r_S)
        run.count("free_propagations")
        k, P = studies.radial_spectrum(img, (0.5, 2.0))
        peaks = studies.spectral_peaks(k, P, k_min=0.3 / t)
        n = fringes.extract_winding(img, delta=TWO_PI * t, r_window=(0.5, 2.0))
        rows.append({"t": t, "t_ms": 1e3 * t * p.time_unit, "t_over_tau_C": t / tau_C,
                     "kappa": kappa, "U": U, "ring_n": ring.winding_n, "ring_gamma": ring.phase_drop_gamma,
                     "winding_measured": n, "n_spectral_peaks": len(peaks),
                     "peaks_kt": ";".join(f"{kk * t:.3f}:{pw:.3f}" for kk, pw in peaks)})
        run.save_image(img, f"{prefix}_{i:02d}", kappa=kappa, U=U, barrier_theta=0.0,
                       analysis="jump" if U > 0 else "spacing", analysis_window=[0.5, 2.0],
                       spacing_window=list(studies.single_particle_window(t, sig[1])))
        images.append(img)
    run.write_csv(rows, f"{prefix}.csv")
    return rows, images


def cmd_gpe_ground(run: Run, args):
    p = run.cfg.trap
    barrier = p.barrier_height > 0 and not args.no_barrier
    st = _ground(run, p, barrier)
    _write_ground(run, st)


def _write_ground(run: Run, st: gpe.MeanFieldState):
    p = st.params
    gpe.save_checkpoint(st, run.path("ground.npz"))
    img = column_density(st)
    run.save_image(img, "ground")
    sigma_TF, r0 = gpe.thomas_fermi_width(st)
    e = gpe.energy(st)
    reg = gpe.validate_imprint_regime(p, st.chemical_potential_mu)
    info = st.info.get("ground")
    row = {"mu_Hz": studies.mu_hz(st), "mu_internal": st.mu, "N": st.N, "z_width": st.z_width,
           "sigma_TF": sigma_TF, "sigma_TF_um": 1e6 * sigma_TF * p.r_S, "ring_center": r0,
           "disc_offset": st.trap.disc_offset, "energy_total": e["total"],
           "residual": info.residual if info else None, "steps": info.steps if info else None,
           "barrier_over_mu": reg.barrier_over_mu, "healing_over_width": reg.healing_over_width,
           "speed_over_sound": reg.speed_over_sound}
    run.write_csv([row], "ground.csv")
    r, n = gpe.radial_profile(st)
    with open(run.path("ground_radial.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "density"])
        w.writerows(zip(r.tolist(), n.tolist()))


def _imprinted(run: Run, args, barrier=True):
    p = run.cfg.trap
    barrier = barrier and p.barrier_height > 0
    st = _ground(run, p, barrier, checkpoint=getattr(args, "ground", None))
    kappa, _ = _ring_params(run.cfg)
    n = run.cfg.run.winding_n or 0
    theta, rho = gpe.angular_density_profile(st)
    sol = gpe.imprint_phase(rho, kappa, n, theta)
    start = gpe.apply_imprint(st, sol, phase_offset=_phase_offset(run.cfg))
    return st, start, sol, float(rho[0])


def cmd_gpe_imprint(run: Run, args):
    st, start, sol, rho_anti = _imprinted(run, args)
    p = st.params
    io.write_field(start.field, run.path("imprinted.bin"), p.r_S, p.time_unit,
                   extra={"z_width": start.z_width, "kappa": sol.kappa, "n": sol.winding_n})
    run.save_image(column_density(start), "imprinted")
    row = {"kappa": sol.kappa, "n": sol.winding_n, "J_imprint": sol.J_imprint,
           "slope_s": sol.slope_s, "gamma": sol.gamma, "rho_antibarrier": rho_anti,
           "mu_Hz": studies.mu_hz(st)}
    run.write_csv([row], "imprint.csv")
    with open(run.path("imprint_phase.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "zeta", "rho"])
        w.writerows(zip(sol.theta.tolist(), sol.zeta.tolist(), sol.rho.tolist()))


def cmd_gpe_expand(run: Run, args):
    st, start, sol, rho_anti = _imprinted(run, args)
    p = st.params
    sigma_TF, _ = gpe.thomas_fermi_width(st)
    times_s = list(run.cfg.run.expansion_times)
    outs, images = studies.mf_expansion_images(start, times_s, _dt(run.cfg))
    run.count("expansions", len(outs))
    jump = st.trap.barrier_height > 0
    rows = []
    for i, (ts, out, img) in enumerate(zip(times_s, outs, images)):
        t = out.time
        hints = {"kappa": sol.kappa, "n_imprinted": sol.winding_n, "gamma_imprinted": sol.gamma,
                 "J_imprint": sol.J_imprint, "rho_antibarrier": rho_anti,
                 "barrier_theta": st.trap.barrier_theta, "analysis": "jump" if jump else "spacing",
                 "analysis_window": list(studies.spiral_annulus(t, st.trap.omega_r, sigma_TF)),
                 "spacing_window": list(_spacing_hint(p, t)), "harmonic": True}
        run.save_image(img, f"gpe_{i:02d}", **hints)
        if args.fields:
            io.write_field(out.field, run.path(f"gpe_{i:02d}.bin"), p.r_S, p.time_unit,
                           extra=hints)
        rows.append({"t_ms": 1e3 * ts, "N": out.N, "z_width": out.z_width,
                     "energy_total": gpe.energy(out)["total"]})
    run.write_csv(rows, "expand.csv")


def _load_any(path):
    path = Path(path)
    if path.suffix == ".bin":
        f, header = io.read_field(path)
        units = header["units"]
        img = column_density(f, units["length_m"], units["time_s"])
        img.meta.update(header.get("extra", {}))
        return img
    img = io.load_image(path)
    side = io.sidecar_path(path)
    if side.exists():
        img.meta.update(json.loads(side.read_text()))
    return img


def _collect_inputs(paths):
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(q for q in p.iterdir() if q.suffix in (".pgm", ".bin"))
        else:
            out.append(p)
    if not out:
        raise AnalysisError("no .pgm or .bin inputs found")
    return out


def cmd_analyze(run: Run, args):
    inputs = _collect_inputs(args.inputs)
    window = _floats(args.window) if args.window else None
    rows, spacing = [], []
    for path in inputs:
        img = _load_any(path)
        mode = args.mode if args.mode != "auto" else img.meta.get("analysis", "spacing")
        row = {"file": path.name, "t_ms": 1e3 * img.time_s, "mode": mode, "error": ""}
        try:
            spacing += _analyze_one(run, args, path, img, mode, window, row)
        except AnalysisError as exc:
            row["error"] = str(exc)
        run.count("images_analyzed")
        rows.append(row)
    if all(r["error"] for r in rows):
        raise AnalysisError("; ".join(f"{r['file']}: {r['error']}" for r in rows))
    run.write_csv(rows, "report.csv")
    if len(spacing) >= 2:
        t, d, _ = zip(*spacing)
        fit = studies.fit_line(t, d)
        run.write_csv([{"slope_m_per_s": fit.slope, "slope_err": fit.slope_err,
                        "intercept_m": fit.intercept, "intercept_err": fit.intercept_err,
                        "through_origin": fit.through_origin}], "spacing_fit.csv")


def _analyze_one(run: Run, args, path, img, mode, window, row):
    """Fill ``row`` for one image; returns [(t_s, delta_m, err_m)] in spacing mode."""
    meta = img.meta
    if mode == "spacing":
        w = window or tuple(meta.get("spacing_window", studies.MF_SPACING_WINDOW))
        delta, err = studies.measure_spacing(img, w)
        pred = TWO_PI * img.time
        row.update(delta=delta, delta_err=err, predicted=pred,
                   ratio=delta / pred if pred else math.nan,
                   delta_um=1e6 * delta * img.length_unit_m,
                   delta_err_um=1e6 * err * img.length_unit_m, r_lo=w[0], r_hi=w[1])
        return [(img.time_s, delta * img.length_unit_m, err * img.length_unit_m)]
    w = window or meta.get("analysis_window")
    if w is None:
        raise AnalysisError(f"{path}: no analysis window (pass --window lo,hi)")
    rep = fringes.analyze_image(img, tuple(w), barrier_theta=meta.get("barrier_theta", 0.0),
                                kappa=meta.get("kappa"),
                                density_at_antibarrier=meta.get("rho_antibarrier"))
    row.update(rep.as_row(kappa=meta.get("kappa"), gamma_imprinted=meta.get("gamma_imprinted")))
    if args.overlay:
        plotting.analysis_overlay(img, rep, run.path(f"{path.stem}_overlay.png"),
                                  barrier_theta=meta.get("barrier_theta", 0.0), lim=1.2 * w[1])
    return []


# --------------------------------------------------------------------------
# reproduction recipes

def repro_fig2(run: Run, args):
    U = 1.0
    states = [solve_ground_state(k, U) for k in FIG2_KAPPAS]
    run.count("eigen_solves", len(states))
    plotting.ring_states(states, run.path("fig2.png"))
    rows = []
    for st in states:
        ph = st.unwrapped_phase()
        for th, a, r in zip(st.theta_grid[::8], ph[::8], st.density[::8]):
            rows.append({"kappa": st.kappa, "theta": th, "phase": a, "density": r})
    run.write_csv(rows, "fig2.csv")
    run.write_csv([st.summary() for st in states], "fig2_summary.csv")


def repro_fig3(run: Run, args):
    grid = make_grid(*FIG3_GRID)
    tau_C = timescales(FIG3_SIGMAS[1], 1.0).tau_C
    _, images = _expand_sp(run, 0.51, 1.0, FIG3_SIGMAS, grid, [0.25 * tau_C, 1.25 * tau_C],
                           prefix="fig3")
    plotting.image_panels(images, ["t = 0.25 tau_C", "t = 1.25 tau_C"], run.path("fig3.png"),
                          lim=2.5)


def _times_ms(args, default):
    return _floats(args.times) if args.times else default


def repro_fig4(run: Run, args):
    p = run.cfg.trap.replace(barrier_height=0.0, Omega=0.0)
    times_s = [1e-3 * t for t in _times_ms(args, FIG4_TIMES_MS)]
    grid = make_grid(*studies.MF_GRID)
    dt = _dt(run.cfg)
    series = {}
    sp = studies.single_particle_spacing(p, times_s)
    series["single particle"] = sp
    full, full_imgs = studies.mf_spacing(p, times_s, grid, dt)
    series["GPE"] = full
    free, _ = studies.mf_spacing(p.replace(scattering_length_a=0.0), times_s, grid, dt)
    series["GPE a=0"] = free
    run.count("expansions", 3 * len(times_s))
    rows, pts = [], {}
    L = p.r_S
    for label, points in series.items():
        rows += [pt.as_row(label, L) for pt in points]
        pts[label] = [(1e3 * pt.t_s, 1e6 * pt.delta * L, 1e6 * pt.delta_err * L) for pt in points]
        fit = studies.fit_line([pt.t_s for pt in points], [pt.delta for pt in points])
        rows.append({"model": label, "fit_slope_um_per_ms": 1e3 * fit.slope * L / p.time_unit,
                     "fit_intercept_um": 1e6 * fit.intercept * L,
                     "fit_intercept_err_um": 1e6 * fit.intercept_err * L,
                     "through_origin": fit.through_origin})
    for i, img in enumerate(full_imgs):
        run.save_image(img, f"fig4_gpe_{i:02d}", analysis="spacing",
                       spacing_window=list(studies.MF_SPACING_WINDOW))
    run.write_csv(rows, "fig4.csv")
    slope = 1e6 * TWO_PI * L / p.time_unit * 1e-3  # um per ms
    plotting.spacing_vs_time(pts, run.path("fig4.png"), 1e6 * L, slope)


def _sweep(run: Run, kappas, t_ms):
    p = run.cfg.trap.replace(Omega=0.0)
    grid = make_grid(*studies.MF_GRID)
    if p.barrier_height == 0:
        free = gpe.imaginary_time_ground_state(p, grid, barrier=False, tol=run.cfg.run.ground_tol)
        p = studies.barrier_for_fraction(p, SWEEP_BARRIER_FRACTION, free.chemical_potential_mu)
    points, st = studies.imprint_sweep(p, kappas, 1e-3 * t_ms, n=run.cfg.run.winding_n or 0,
                                       grid=grid, dt=_dt(run.cfg),
                                       phase_offset=_phase_offset(run.cfg))
    run.count("expansions", len(points))
    return points, st


def repro_fig5(run: Run, args):
    kappas = _floats(args.kappas) if args.kappas else FIG5_KAPPAS
    points, st = _sweep(run, kappas, IMPRINT_TIME_MS)
    titles = []
    for i, pt in enumerate(points):
        r = pt.report
        run.save_image(pt.image, f"fig5_{i:02d}", kappa=pt.kappa, analysis="jump",
                       analysis_window=[r.fit_windows["r_lo"], r.fit_windows["r_hi"]],
                       barrier_theta=st.trap.barrier_theta, gamma_imprinted=pt.gamma_imprinted)
        titles.append(f"kappa={pt.kappa:g}  Delta/delta={r.ratio:.2f}  n={r.winding_n}")
    run.write_csv([pt.as_row() for pt in points], "fig5.csv")
    lim = 1.2 * points[0].report.fit_windows["r_hi"]
    plotting.image_panels([pt.image for pt in points], titles, run.path("fig5.png"), lim=lim)


def repro_fig6(run: Run, args):
    kappas = _floats(args.kappas) if args.kappas else FIG6_KAPPAS
    points, _ = _sweep(run, kappas, IMPRINT_TIME_MS)
    run.write_csv([pt.as_row() for pt in points], "fig6.csv")
    plotting.ratio_vs_gamma([pt.gamma_imprinted for pt in points],
                            [pt.report.ratio for pt in points],
                            [pt.report.ratio_err for pt in points], run.path("fig6.png"),
                            n=run.cfg.run.winding_n or 0)


def repro_scaling(run: Run, args):
    res = studies.scaling_study(run.cfg.trap, dt=_dt(run.cfg))
    rows = [{"omega_t": wt, "width_ratio": r} for wt, r in zip(res.omega_t, res.width_ratio)]
    rows.append({"onset_time": res.onset_time, "onset_predicted": res.onset_predicted,
                 "onset_ratio": res.onset_ratio, "sigma_TF": res.sigma_TF})
    run.write_csv(rows, "scaling.csv")
    plotting.scaling_plot(res, run.path("scaling.png"))


RECIPES = {"fig2": repro_fig2, "fig3": repro_fig3, "fig4": repro_fig4, "fig5": repro_fig5,
           "fig6": repro_fig6, "scaling": repro_scaling}


def cmd_repro(run: Run, args):
    RECIPES[args.figure](run, args)


# --------------------------------------------------------------------------
# argument parsing

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (defaults built in)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key; may be repeated")
    common.add_argument("--threads", type=int,
                        help="FFT threads (sets RINGSQUID_THREADS; 1 gives bitwise reproducibility)")

    parser = argparse.ArgumentParser(prog="ringsquid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", parents=[common], help="ring ground states over kappa and U")
    p.add_argument("--kappas", help="comma-separated kappa values")
    p.add_argument("--U", help="comma-separated barrier strengths")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("expand-sp", parents=[common], help="single-particle free expansion")
    p.add_argument("--tau-c", help="times as multiples of tau_C(r_S), comma-separated")
    p.add_argument("--psf", action="store_true", help="blur with the Airy point spread function")
    p.set_defaults(func=cmd_expand_sp)

    p = sub.add_parser("gpe-ground", parents=[common], help="mean-field ground state")
    p.add_argument("--no-barrier", action="store_true")
    p.set_defaults(func=cmd_gpe_ground)

    for name, func, hlp in (("gpe-imprint", cmd_gpe_imprint, "imprint a rotating-frame state"),
                            ("gpe-expand", cmd_gpe_expand, "imprint and expand")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--ground", help="ground-state checkpoint (.npz) to start from")
        if name == "gpe-expand":
            p.add_argument("--fields", action="store_true", help="also dump complex fields")
        p.set_defaults(func=func)

    p = sub.add_parser("analyze", parents=[common], help="fringe analysis of images")
    p.add_argument("inputs", nargs="+", help=".pgm/.bin files or directories")
    p.add_argument("--mode", choices=("auto", "spacing", "jump"), default="auto")
    p.add_argument("--window", help="radial window lo,hi in units of r_S")
    p.add_argument("--overlay", action="store_true", help="write annotated overlay PNGs")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("repro", parents=[common], help="one-shot reproduction recipes")
    p.add_argument("figure", choices=sorted(RECIPES))
    p.add_argument("--times", help="expansion times in ms (fig4)")
    p.add_argument("--kappas", help="kappa values (fig5, fig6)")
    p.set_defaults(func=cmd_repro)
    return parser


def _overrides(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        os.environ["RINGSQUID_THREADS"] = str(max(1, args.threads))
    run = None
    try:
        overrides = _overrides(args.set)
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            cfg = parse_config_text(DEFAULT_CONFIG_TEXT, "<defaults>", overrides)
        name = args.command if args.command != "repro" else f"repro {args.figure}"
        run = Run(name, cfg, args.out, args.config)
        args.func(run, args)
        m = run.finish()
        print(f"{name}: {len(m.artifacts)} files in {m.outdir} ({m.wall_clock_s:.1f} s)")
        return EXIT_OK
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    except AnalysisError as exc:
        code, msg = EXIT_ANALYSIS, f"analysis failed: {exc}"
    except NumericalError as exc:
        code, msg = EXIT_NUMERICAL, f"numerical failure: {exc}"
    except ParameterError as exc:
        code, msg = EXIT_CONFIG, f"invalid parameters: {exc}"
    except OSError as exc:
        code, msg = EXIT_CONFIG, f"cannot read input: {exc}"
    if run is not None:
        run.cleanup()
    print(f"ringsquid: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
