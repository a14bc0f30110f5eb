"""Multi-step measurement recipes shared by the CLI and the acceptance tests.

Each recipe runs a simulator, renders column densities and feeds them to
the fringe analysis.  Times are taken in seconds at the boundary and
converted to internal units (lengths in r_S, time in m r_S^2 / hbar).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar

from . import fringes, gpe
from .config import Grid2D, TargetTrapParams, make_grid, to_dimensionless
from .expansion import build_initial_superposition, propagate_free_fft
from .imaging import DensityImage, column_density
from .ring import solve_ground_state

TWO_PI = 2 * math.pi

# Radial window (units of r_S) for the fringe spacing of interacting clouds.
# Outside r ~ 2 r_S the disc-ring fringes dominate the azimuthal average; the
# ring's self-interference circles are modelled as a second component.
MF_SPACING_WINDOW = (2.0, 6.0)

# 512^2 over 6 r_S resolves the released disc (local speeds near 200 r_S
# per time unit) once the lens frame takes over the bulk expansion.
MF_GRID = (6.0, 512)
MF_DT = 1e-5


def single_particle_window(t, sigma_S):
    """Radial window covering the expanded ring: from inside r_S to two
    ballistic widths t / sigma_S beyond it."""
    return (0.8, 1.0 + 2.0 * t / sigma_S)


def spiral_annulus(t, omega_r, sigma_TF, width=2.0):
    """Annulus where t < tau~_C(r): outside the reach of the antipodal half
    of the ring, r > omega t sigma_TF - r_S (all internal units)."""
    r_c = max(0.5, omega_r * t * sigma_TF - 1.0)
    return (r_c, r_c + width)


@dataclass
class SpacingPoint:
    t: float  # internal units
    t_s: float
    delta: float
    delta_err: float
    window: tuple

    @property
    def predicted(self):
        return TWO_PI * self.t

    @property
    def ratio(self):
        return self.delta / self.predicted

    def as_row(self, model, length_unit_m):
        return {"model": model, "t_ms": 1e3 * self.t_s, "delta_um": 1e6 * self.delta * length_unit_m,
                "delta_err_um": 1e6 * self.delta_err * length_unit_m,
                "predicted_um": 1e6 * self.predicted * length_unit_m, "ratio": self.ratio,
                "r_lo": self.window[0], "r_hi": self.window[1]}


def measure_spacing(img: DensityImage, window, n_cuts: int = 8, harmonic: bool = True,
                    k0: float | None = None):
    """Mean radial fringe spacing over ``n_cuts`` cuts.  With ``k0`` None the
    search starts from the single-particle wavenumber r_S / t, bounded to
    +-30%, so the fit cannot settle on the self-interference harmonic."""
    thetas = np.linspace(0.0, TWO_PI, n_cuts, endpoint=False)
    if k0 is None and img.time > 0:
        k0 = 1.0 / img.time
    return fringes.mean_fringe_spacing(img, window, thetas, harmonic=harmonic, k0=k0)


@dataclass
class LineFit:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float

    @property
    def through_origin(self):
        return abs(self.intercept) <= max(self.intercept_err, 1e-300)


def fit_line(t, y, err=None) -> LineFit:
    """Straight line y = slope t + intercept, weighted by 1/err^2 when err is
    given.  The covariance is scaled by the reduced chi-square when there are
    spare degrees of freedom, so without err the errors come from the residuals."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    err = np.ones_like(t) if err is None else np.asarray(err, float)
    X = np.stack([t, np.ones_like(t)], axis=1) / err[:, None]
    b = y / err
    coef, *_ = np.linalg.lstsq(X, b, rcond=None)
    cov = np.linalg.inv(X.T @ X)
    dof = t.size - 2
    if dof > 0:
        cov *= float(np.sum((X @ coef - b) ** 2)) / dof
    return LineFit(slope=float(coef[0]), intercept=float(coef[1]),
                   slope_err=float(math.sqrt(cov[0, 0])), intercept_err=float(math.sqrt(cov[1, 1])))


def single_particle_spacing(p: TargetTrapParams, times_s, grid: Grid2D | None = None):
    """Barrier-free, n = 0 single-particle expansion at the trap's sigma_S."""
    d = to_dimensionless(p)
    grid = grid or make_grid(12.0, 512)
    psi = build_initial_superposition(d, solve_ground_state(0.0, 0.0), grid)
    points = []
    for ts in times_s:
        t = ts / p.time_unit
        img = column_density(propagate_free_fft(psi, t))
        window = single_particle_window(t, d.sigma_S_hat)
        delta, err = measure_spacing(img, window)
        points.append(SpacingPoint(t, ts, delta, err, window))
    return points


def mf_expansion_images(state: gpe.MeanFieldState, times_s, dt: float = MF_DT):
    times = [ts / state.params.time_unit for ts in times_s]
    # without interactions the mean-field step bound is loose
    if state.trap.g == 0:
        dt = max(dt, 0.05 / max(abs(state.mu or 1.0), 1.0))
    outs = gpe.expand_gpe(state, times, dt)
    return outs, [column_density(o) for o in outs]


def mf_spacing(p: TargetTrapParams, times_s, grid: Grid2D | None = None, dt: float = MF_DT,
               state: gpe.MeanFieldState | None = None):
    """Barrier-free, n = 0 mean-field expansion.  With a = 0 the window of the
    single-particle model applies; otherwise ``MF_SPACING_WINDOW``."""
    grid = grid or make_grid(*MF_GRID)
    if state is None:
        state = gpe.imaginary_time_ground_state(p, grid, barrier=False)
    _, images = mf_expansion_images(state, times_s, dt)
    d = to_dimensionless(p)
    points = []
    for ts, img in zip(times_s, images):
        t = ts / p.time_unit
        if p.scattering_length_a == 0:
            window = single_particle_window(t, d.sigma_S_hat)
        else:
            window = MF_SPACING_WINDOW
        delta, err = measure_spacing(img, window)
        points.append(SpacingPoint(t, ts, delta, err, window))
    return points, images


@dataclass
class ImprintPoint:
    kappa: float
    gamma_imprinted: float
    J_imprint: float
    report: fringes.FringeReport
    image: DensityImage = field(repr=False, default=None)

    @property
    def gamma_error(self):
        return self.report.gamma - self.gamma_imprinted

    def as_row(self):
        return self.report.as_row(kappa=self.kappa, gamma_imprinted=self.gamma_imprinted,
                                  J_imprint=self.J_imprint, t_ms=1e3 * self.image.time_s)


def barrier_for_fraction(p: TargetTrapParams, fraction: float, mu_J: float) -> TargetTrapParams:
    return p.replace(barrier_height=fraction * mu_J)


def imprint_sweep(p: TargetTrapParams, kappas, t_s: float, n: int = 0,
                  grid: Grid2D | None = None, dt: float = MF_DT, phase_offset: float = 0.0,
                  state: gpe.MeanFieldState | None = None):
    """Imprint each kappa on the barrier ground state, expand for ``t_s`` and
    measure gamma.  The analysis window is the spiral annulus at ``t_s``."""
    grid = grid or make_grid(*MF_GRID)
    if state is None:
        state = gpe.imaginary_time_ground_state(p, grid, barrier=True)
    sigma_TF, _ = gpe.thomas_fermi_width(state)
    theta, rho = gpe.angular_density_profile(state)
    t = t_s / p.time_unit
    window = spiral_annulus(t, state.trap.omega_r, sigma_TF)
    rho_anti = float(rho[0])
    points = []
    for kappa in kappas:
        sol = gpe.imprint_phase(rho, kappa, n, theta)
        start = gpe.apply_imprint(state, sol, phase_offset=phase_offset)
        out = gpe.propagate_gpe(start, t, dt)
        img = column_density(out)
        rep = fringes.analyze_image(img, window, kappa=kappa, density_at_antibarrier=rho_anti,
                                    barrier_theta=state.trap.barrier_theta)
        points.append(ImprintPoint(kappa, sol.gamma, sol.J_imprint, rep, img))
    return points, state


@dataclass
class ScalingResult:
    omega_t: np.ndarray
    width_ratio: np.ndarray  # measured width / (initial width * lambda)
    onset_time: float  # internal units
    onset_predicted: float
    sigma_TF: float
    visibility_t: np.ndarray = field(repr=False, default=None)
    visibility: np.ndarray = field(repr=False, default=None)

    @property
    def onset_ratio(self):
        return self.onset_time / self.onset_predicted


def outer_width(state: gpe.MeanFieldState, r_S: float = 1.0):
    """RMS distance from r_S of the ring's outer half, weighted by r dr.

    Under the self-similar scaling this grows exactly as lambda(t), and it is
    unaffected by the inner half folding through the axis."""
    r, n = gpe.radial_profile(state, (r_S, state.field.grid.half_extent), n_r=1500)
    w = r * n
    return math.sqrt(float(np.sum(w * (r - r_S) ** 2) / np.sum(w)))


def circle_visibility(img: DensityImage, r0: float, half: float = 0.2, n_theta: int = 64):
    """Contrast of the self-interference component k = 2 r_S / t of the
    azimuthally averaged profile around r0."""
    t = img.time
    r = np.linspace(r0 - half, r0 + half, 200)
    th = np.linspace(0.0, TWO_PI, n_theta, endpoint=False)
    y = fringes.polar_samples(img, r[:, None], th[None, :]).mean(axis=1)
    X = fringes._basis(r, 2.0 / t)
    c, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(math.hypot(c[3], c[5]) / abs(c[0])) if c[0] else 0.0


def scaling_study(p: TargetTrapParams, grid: Grid2D | None = None, dt: float = MF_DT,
                  omega_t=(0.5, 1.0, 2.0, 3.0, 4.0, 5.0), r_probe: float = 1.5,
                  onset_threshold: float = 0.2, n_onset: int = 24):
    """Barrier-free ring (no disc) with omega_z = omega_r: width ratio against
    lambda(t) and the self-interference onset time at ``r_probe``."""
    p = p.replace(omega_z=p.omega_r, disc_fraction=0.0, barrier_height=0.0)
    grid = grid or make_grid(*MF_GRID)
    st = gpe.imaginary_time_ground_state(p, grid, barrier=False)
    w = st.trap.omega_r
    sigma_TF, _ = gpe.thomas_fermi_width(st)
    w_init = outer_width(st)
    t_pred = (r_probe + 1.0) / (w * sigma_TF)
    t_scan = list(t_pred * np.linspace(0.4, 1.6, n_onset))
    t_width = [x / w for x in omega_t]
    times = sorted(set(t_width + t_scan))
    outs = gpe.expand_gpe(st, times, dt)
    by_t = dict(zip(times, outs))
    ratios = np.array([outer_width(by_t[t]) / (w_init * math.sqrt(1 + (w * t) ** 2))
                       for t in t_width])
    vis = np.array([circle_visibility(column_density(by_t[t]), r_probe) for t in t_scan])
    onset = _first_crossing(np.array(t_scan), vis, onset_threshold)
    return ScalingResult(omega_t=np.asarray(omega_t, float), width_ratio=ratios, onset_time=onset,
                         onset_predicted=t_pred, sigma_TF=sigma_TF,
                         visibility_t=np.array(t_scan), visibility=vis)


def _first_crossing(t, y, level):
    above = np.nonzero(y >= level)[0]
    if above.size == 0:
        return math.inf
    i = int(above[0])
    if i == 0:
        return float(t[0])
    # linear interpolation between the bracketing samples
    return float(t[i - 1] + (level - y[i - 1]) * (t[i] - t[i - 1]) / (y[i] - y[i - 1]))


def radial_spectrum(img: DensityImage, r_window, n_theta: int = 32, n_r: int = 1024):
    """Radial power spectrum averaged over ``n_theta`` cuts.  Each cut is
    detrended with a quadratic and Hann-windowed before the transform, so
    spirals (whose fringe phase varies with angle) and circles both add
    their power.  Returns (k, P) with k in radians per unit length."""
    r = np.linspace(r_window[0], r_window[1], n_r)
    win = np.hanning(n_r)
    P = 0.0
    for th in np.linspace(0.0, TWO_PI, n_theta, endpoint=False):
        y = fringes.polar_samples(img, r, np.full_like(r, th))
        y = y - np.polyval(np.polyfit(r, y, 2), r)
        P = P + np.abs(np.fft.rfft(y * win)) ** 2
    k = TWO_PI * np.fft.rfftfreq(n_r, r[1] - r[0])
    return k, P / n_theta


def spectral_peaks(k, P, k_min: float, rel: float = 0.1):
    """Local maxima above k_min with power >= rel * the strongest one,
    as (k, relative power) pairs sorted by power."""
    sel = k >= k_min
    kk, pp = k[sel], P[sel]
    top = float(pp.max())
    peaks = [(float(kk[i]), float(pp[i] / top)) for i in range(1, kk.size - 1)
             if pp[i] > pp[i - 1] and pp[i] >= pp[i + 1] and pp[i] >= rel * top]
    return sorted(peaks, key=lambda x: -x[1])


def mu_hz(state: gpe.MeanFieldState):
    return state.chemical_potential_mu / (TWO_PI * hbar)
