"""Spiral-fringe analysis: delta, Delta, winding number, phase drop, current.

Images are resampled onto polar coordinates about the grid centre.  Along
each radial cut the density is modelled as

    bg(x) + (c0 + c1 x) cos(k r) + (s0 + s1 x) sin(k r),   x = scaled r,

so for a fixed wavenumber k the fit is linear.  The radial fringe spacing
delta = 2 pi / k comes from a variable-projection search over k followed by
a full nonlinear least-squares refinement for the covariance.  The per-angle
fringe phase alpha(theta) = atan2(s0, c0) tracks arg phi_S(theta) up to a
constant; fringe maxima sit at r = (alpha + 2 pi m) / k.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.optimize import OptimizeWarning, curve_fit, least_squares, minimize_scalar

from .errors import AnalysisError
from .imaging import DensityImage

TWO_PI = 2 * math.pi


def wrap(a):
    return (np.asarray(a) + math.pi) % TWO_PI - math.pi


def polar_samples(img: DensityImage, r, theta, order: int = 3):
    """Image values at polar points (broadcast r against theta)."""
    r, theta = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float))
    g = img.grid
    col = (r * np.cos(theta) - g.x[0]) / g.pixel_pitch
    row = (r * np.sin(theta) - g.y[0]) / g.pixel_pitch
    return map_coordinates(img.values, [row.ravel(), col.ravel()], order=order,
                           mode="constant", cval=0.0).reshape(r.shape)


def _radial_axis(img, r_window, oversample=2.0):
    r_lo, r_hi = r_window
    if not 0 <= r_lo < r_hi:
        raise AnalysisError(f"bad radial window {r_window}")
    step = img.grid.pixel_pitch / oversample
    n = max(16, int(round((r_hi - r_lo) / step)) + 1)
    return np.linspace(r_lo, r_hi, n)


def _basis(r, k, env_deg=1, bg_deg=2, k2=None):
    mid = 0.5 * (r[0] + r[-1])
    half = 0.5 * (r[-1] - r[0])
    x = (r - mid) / half
    cols = [x ** j for j in range(bg_deg + 1)]
    for kk in (k,) if k2 is None else (k, k2):
        cols += [x ** j * np.cos(kk * (r - mid)) for j in range(env_deg + 1)]
        cols += [x ** j * np.sin(kk * (r - mid)) for j in range(env_deg + 1)]
    return np.stack(cols, axis=-1)


def _initial_k(r, y, bg_deg=2):
    x = (r - r.mean()) / (0.5 * np.ptp(r))
    trend = np.polyval(np.polyfit(x, y, bg_deg), x)
    resid = (y - trend) * np.hanning(y.size)
    pad = 16 * y.size
    spec = np.abs(np.fft.rfft(resid, n=pad))
    freqs = np.fft.rfftfreq(pad, d=r[1] - r[0])
    spec[freqs < 1.5 / np.ptp(r)] = 0.0  # ignore envelope-scale structure
    i = int(np.argmax(spec))
    return TWO_PI * freqs[i]


@dataclass
class CosineFit:
    k: float
    k_err: float
    coeffs: np.ndarray
    r: np.ndarray
    residual_rms: float
    contrast: float
    k2: float | None = None


def _projected_cost(r, y, env_deg, bg_deg):
    def cost(p):
        X = _basis(r, p[0], env_deg, bg_deg, p[1] if len(p) > 1 else None)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        return X @ coef - y
    return cost


def _search_k(r, y, k0, env_deg, bg_deg, harmonic, k0_is_peak=True):
    """Variable-projection search; returns (params, sum of squares)."""
    cost = _projected_cost(r, y, env_deg, bg_deg)
    if not harmonic:
        res = minimize_scalar(lambda k: float(np.sum(cost([k]) ** 2)),
                              bounds=(0.8 * k0, 1.25 * k0), method="bounded",
                              options={"xatol": 1e-12 * k0})
        return [float(res.x)], float(res.fun)
    best = None
    # The FFT peak may be either component, so try it as both.
    for k in (k0, 0.5 * k0) if k0_is_peak else (k0,):
        for f in (0.9, 1.0, 1.1):
            p0 = [f * k, 2 * f * k]
            res = least_squares(cost, p0, bounds=([0.7 * k, 1.5 * k], [1.3 * k, 2.6 * k]),
                                x_scale=0.05 * k, xtol=1e-12)
            ss = float(np.sum(res.fun ** 2))
            if best is None or ss < best[1]:
                best = (list(map(float, res.x)), ss)
    return best


def fit_radial_cosine(r, y, k0=None, env_deg=1, bg_deg=2, harmonic=False) -> CosineFit:
    """Variable-projection fit of an enveloped cosine on a background.

    With ``harmonic`` a second enveloped cosine near twice the wavenumber is
    fitted alongside; ``k`` is then the lower of the two.  This separates
    disc-ring fringes from the ring's own self-interference, which at late
    times is the stronger signal.
    """
    r = np.asarray(r, float)
    y = np.asarray(y, float)
    from_peak = k0 is None
    if from_peak:
        k0 = _initial_k(r, y, bg_deg)
    if not k0 > 0:
        raise AnalysisError("no fringe frequency found in the radial profile")

    ks, _ = _search_k(r, y, k0, env_deg, bg_deg, harmonic, from_peak)
    k2 = ks[1] if harmonic else None
    X = _basis(r, ks[0], env_deg, bg_deg, k2)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    nk = len(ks)

    def model(rr, *p):
        return _basis(rr, p[0], env_deg, bg_deg, p[1] if nk > 1 else None) @ np.asarray(p[nk:])

    scale = float(np.max(np.abs(y))) or 1.0
    k_err = 0.0
    try:
        with warnings.catch_warnings():
            # noise-free data gives an infinite covariance, handled below
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(lambda rr, *p: model(rr, *p) / scale, r, y / scale,
                                   p0=[*ks, *coef], maxfev=4000)
        if np.all(np.isfinite(pcov)):
            if abs(popt[0] - ks[0]) < 0.05 * ks[0]:
                ks = [float(v) for v in popt[:nk]]
                coef = np.asarray(popt[nk:]) * scale
            k_err = float(math.sqrt(max(pcov[0, 0], 0.0)))
    except (RuntimeError, ValueError):
        pass
    k2 = ks[1] if harmonic else None
    fit = _basis(r, ks[0], env_deg, bg_deg, k2) @ coef
    nb = bg_deg + 1
    ne = env_deg + 1
    amp = math.hypot(coef[nb], coef[nb + ne])
    bg0 = abs(coef[0]) or 1.0
    return CosineFit(k=ks[0], k_err=k_err, coeffs=coef, r=r,
                     residual_rms=float(np.sqrt(np.mean((fit - y) ** 2))),
                     contrast=amp / bg0, k2=k2)


def _cut_fit(img, theta_cut, r_window, min_fringes, k0, harmonic):
    r = _radial_axis(img, r_window)
    y = polar_samples(img, r, theta_cut)
    fit = fit_radial_cosine(r, y, k0=k0, harmonic=harmonic)
    n_fringes = fit.k * np.ptp(r) / TWO_PI
    if n_fringes < min_fringes:
        raise AnalysisError(f"only {n_fringes:.2f} fringes in the radial window; need >= {min_fringes}",
                            raw=n_fringes)
    return fit


def radial_fringe_spacing(img: DensityImage, theta_cut: float, r_window, min_fringes=3.0,
                          k0=None, harmonic=False):
    """delta and its one-sigma error along the radial cut at theta_cut."""
    fit = _cut_fit(img, theta_cut, r_window, min_fringes, k0, harmonic)
    return TWO_PI / fit.k, TWO_PI * fit.k_err / fit.k ** 2


def _combine(vals, errs):
    vals = np.asarray(vals)
    errs = np.maximum(np.asarray(errs), 1e-15 * np.abs(vals))
    w = 1 / errs ** 2
    mean = float(np.sum(w * vals) / np.sum(w))
    err = float(max(1 / math.sqrt(np.sum(w)), np.std(vals, ddof=1) / math.sqrt(len(vals))
                    if len(vals) > 1 else 0.0))
    return mean, err


def mean_fringe_spacing(img: DensityImage, r_window, thetas, k0=None, harmonic=False,
                        return_fits=False):
    """Inverse-variance mean of delta over several cuts; the error is the
    larger of the propagated error and the scatter of the cuts."""
    fits = [_cut_fit(img, th, r_window, 3.0, k0, harmonic) for th in thetas]
    vals = [TWO_PI / f.k for f in fits]
    errs = [TWO_PI * f.k_err / f.k ** 2 for f in fits]
    mean, err = _combine(vals, errs)
    if return_fits:
        return mean, err, fits
    return mean, err


@dataclass
class PhaseProfile:
    theta: np.ndarray
    alpha: np.ndarray  # wrapped fringe phase
    alpha_err: np.ndarray
    amplitude: np.ndarray
    k: float


def fringe_phase_profile(img: DensityImage, k: float, r_window, thetas,
                         k2: float | None = None) -> PhaseProfile:
    """Per-angle fringe phase at fixed wavenumber k (linear fits, vectorised).

    ``k2`` adds a nuisance component, typically the self-interference
    fringes near twice the wavenumber."""
    r = _radial_axis(img, r_window)
    thetas = np.asarray(thetas, float)
    Y = polar_samples(img, r[None, :], thetas[:, None])  # (n_theta, n_r)
    X = _basis(r, k, k2=k2)
    coef, *_ = np.linalg.lstsq(X, Y.T, rcond=None)
    resid = Y.T - X @ coef
    dof = max(1, r.size - X.shape[1])
    sigma2 = np.sum(resid ** 2, axis=0) / dof
    xtx_inv = np.linalg.inv(X.T @ X)
    nb = 3
    ne = 2
    c0 = coef[nb]
    s0 = coef[nb + ne]
    amp = np.hypot(c0, s0)
    var = sigma2 * 0.5 * (xtx_inv[nb, nb] + xtx_inv[nb + ne, nb + ne])
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha_err = np.sqrt(var) / amp
    # Basis is centred on the window midpoint; report phase referred to r = 0.
    mid = 0.5 * (r[0] + r[-1])
    alpha = wrap(np.arctan2(s0, c0) + k * mid)
    return PhaseProfile(theta=thetas, alpha=alpha, alpha_err=alpha_err, amplitude=amp, k=k)


def _in_wedge(theta, barrier_theta, half_angle):
    return np.abs(wrap(theta - barrier_theta)) < half_angle


def extract_winding(img: DensityImage, r_ring: float | None = None, delta: float | None = None,
                    r_window=None, barrier_theta: float = 0.0,
                    exclusion_half_angle: float = 0.4, n_theta: int = 720,
                    min_wedge_contrast: float = 0.01, k2: float | None = None) -> int:
    """Winding number from the total 2 pi-winding of the fringe phase.

    Outside the barrier wedge the phase is unwrapped sample by sample.
    Across the wedge it is unwrapped too when the fringe amplitude there
    stays above ``min_wedge_contrast`` of the median; otherwise the jump is
    taken as the wrapped difference between the wedge edges.
    """
    r_window, delta = _resolve_window(img, r_ring, delta, r_window, barrier_theta)
    k = TWO_PI / delta
    v = np.linspace(-math.pi, math.pi, n_theta, endpoint=False)
    theta = barrier_theta + math.pi + v  # v = 0 opposite the barrier
    prof = fringe_phase_profile(img, k, r_window, theta, k2=k2)
    inc = wrap(np.diff(np.concatenate([prof.alpha, prof.alpha[:1]])))
    # index i holds the step from sample i to i+1 (cyclic)
    vmid = v + 0.5 * (v[1] - v[0])
    wedge = np.abs(wrap(vmid + math.pi)) < exclusion_half_angle
    outside = ~wedge
    if np.any(np.abs(inc[outside]) > 0.5 * math.pi):
        raise AnalysisError("fringe phase is not trackable outside the barrier wedge",
                            raw=float(np.max(np.abs(inc[outside]))))
    arc = float(np.sum(inc[outside]))
    median_amp = float(np.median(prof.amplitude))
    wedge_pts = np.abs(wrap(v + math.pi)) < exclusion_half_angle
    if wedge_pts.any() and np.min(prof.amplitude[wedge_pts]) >= min_wedge_contrast * median_amp \
            and np.all(np.abs(inc[wedge]) < 0.75 * math.pi):
        jump = float(np.sum(inc[wedge]))
    else:
        jump = float(wrap(np.sum(inc[wedge])))
    raw = (arc + jump) / TWO_PI
    n = int(round(raw))
    if abs(raw - n) > 0.25:
        raise AnalysisError(f"winding number ambiguous (raw {raw:.3f})", raw=raw)
    return n


@dataclass
class JumpFit:
    Delta: float
    Delta_err: float
    ratio: float
    ratio_err: float
    offset_at_barrier: float
    side_slopes: tuple
    fit_half_angle: float
    exclusion_half_angle: float
    residual_rms: float
    ridge_coeffs: np.ndarray = field(repr=False, default=None)
    ridge_v: np.ndarray = field(repr=False, default=None)
    ridge_r: np.ndarray = field(repr=False, default=None)


def _poly_fit(x, y, deg):
    X = np.stack([x ** j for j in range(deg + 1)], axis=-1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(1, x.size - deg - 1)
    s2 = float(np.sum(resid ** 2) / dof)
    cov = s2 * np.linalg.inv(X.T @ X)
    return coef, cov, float(np.sqrt(np.mean(resid ** 2)))


def extract_jump(img: DensityImage, barrier_theta: float = 0.0, exclusion_half_angle: float = 0.4,
                 r_ring: float | None = None, delta: float | None = None, r_window=None,
                 winding_n: int | None = None, fit_half_angle: float = 1.5,
                 ridge_degree: int = 3, n_theta: int = 720, residual_threshold: float = 0.35,
                 max_exclusion: float = 1.2, k2: float | None = None) -> JumpFit:
    """Spiral jump Delta and its error.

    The fringe ridge r(v) = (alpha(v) + 2 pi m) / k is followed along the arc
    opposite the barrier, v = theta - barrier - pi.  A smooth polynomial in v
    (degree ``ridge_degree``) is fitted to the ridge for |v| <= fit_half_angle,
    never entering the exclusion wedge; its tangent at v = 0 is the
    Archimedean spiral that continues the antibarrier pitch smoothly across
    the barrier, and Delta = 2 pi dr/dv|_0 is the radius it gains over one
    turn.  Positive Delta means the ridge moves outward with increasing
    theta.  The fit is widened away from the wedge when the ridge residuals
    exceed ``residual_threshold`` radians of fringe phase.

    ``offset_at_barrier`` is the gap between straight-line extrapolations of
    the two arms to the barrier angle, a diagnostic of the raw jump.
    """
    r_window, delta = _resolve_window(img, r_ring, delta, r_window, barrier_theta)
    k = TWO_PI / delta
    v = np.linspace(-math.pi, math.pi, n_theta, endpoint=False) + math.pi / n_theta
    theta = barrier_theta + math.pi + v
    prof = fringe_phase_profile(img, k, r_window, theta, k2=k2)
    median_amp = float(np.median(prof.amplitude))

    half = exclusion_half_angle
    while True:
        reach = min(fit_half_angle, math.pi - half)
        keep = np.abs(v) <= reach
        if keep.sum() < 8:
            raise AnalysisError("too few ridge samples outside the exclusion wedge")
        vk = v[keep]
        if np.min(prof.amplitude[keep]) < 0.02 * median_amp:
            raise AnalysisError("ridge tracking failed: fringe contrast below threshold",
                                raw=float(np.min(prof.amplitude[keep]) / median_amp))
        steps = wrap(np.diff(prof.alpha[keep]))
        if np.any(np.abs(steps) > 0.5 * math.pi):
            raise AnalysisError("ridge tracking failed: fringe phase jumps between samples")
        alpha = prof.alpha[keep][0] + np.concatenate(([0.0], np.cumsum(steps)))
        # the ridge nearest the window centre at v = 0
        centre = 0.5 * (r_window[0] + r_window[1])
        a0 = float(np.interp(0.0, vk, alpha))
        m = round((centre * k - a0) / TWO_PI)
        ridge = (alpha + TWO_PI * m) / k
        coef, cov, rms = _poly_fit(vk, ridge, ridge_degree)
        resid_phase = rms * k
        if resid_phase <= residual_threshold or half >= max_exclusion:
            break
        half = min(max_exclusion, half + 0.1)

    Delta = float(TWO_PI * coef[1])
    Delta_err = float(TWO_PI * math.sqrt(max(cov[1, 1], 0.0)))

    left = vk <= 0
    right = vk >= 0
    cl, _, _ = _poly_fit(vk[left], ridge[left], 1)
    cr, _, _ = _poly_fit(vk[right], ridge[right], 1)
    r_plus = cr[0] + cr[1] * math.pi
    r_minus = cl[0] - cl[1] * math.pi
    offset = float(r_minus + (winding_n if winding_n is not None else 0) * delta - r_plus)
    return JumpFit(Delta=Delta, Delta_err=Delta_err, ratio=Delta / delta,
                   ratio_err=Delta_err / delta, offset_at_barrier=offset,
                   side_slopes=(float(cl[1]), float(cr[1])), fit_half_angle=reach,
                   exclusion_half_angle=half, residual_rms=resid_phase,
                   ridge_coeffs=coef, ridge_v=vk, ridge_r=ridge)


def phase_drop_from_ratio(n: int, ratio: float) -> float:
    return TWO_PI * (n - ratio)


def current_from_fringes(ratio: float, kappa: float, density_at_antibarrier: float) -> float:
    """J in units of r_S Omega_0."""
    return density_at_antibarrier * (ratio - kappa)


def _resolve_window(img, r_ring, delta, r_window, barrier_theta):
    if r_window is None:
        if r_ring is None:
            raise AnalysisError("need r_window or r_ring")
        if delta is None:
            delta = _rough_delta(img, r_ring, barrier_theta)
        r_window = (max(0.0, r_ring - 2.5 * delta), r_ring + 2.5 * delta)
    if delta is None:
        delta, _ = radial_fringe_spacing(img, barrier_theta + math.pi, r_window)
    return tuple(r_window), delta


def _rough_delta(img, r_ring, barrier_theta):
    span = 0.5 * r_ring
    d, _ = radial_fringe_spacing(img, barrier_theta + math.pi,
                                 (max(0.0, r_ring - span), r_ring + span))
    return d


@dataclass
class FringeReport:
    delta: float
    delta_err: float
    Delta: float
    Delta_err: float
    ratio: float
    ratio_err: float
    winding_n: int
    gamma: float
    gamma_err: float
    J: float | None
    fit_windows: dict = field(default_factory=dict)
    regime_flags: dict = field(default_factory=dict)
    length_unit_m: float = 1.0

    def as_row(self, **extra):
        row = dict(extra)
        d = asdict(self)
        d.pop("fit_windows")
        flags = d.pop("regime_flags")
        row.update(d)
        row["fit_windows"] = ";".join(f"{k}={v}" for k, v in self.fit_windows.items())
        row["regime_flags"] = ";".join(f"{k}={v}" for k, v in flags.items())
        return row


def analyze_image(img: DensityImage, r_window, barrier_theta: float = 0.0,
                  exclusion_half_angle: float = 0.4, kappa: float | None = None,
                  density_at_antibarrier: float | None = None, n_cuts: int = 8,
                  fit_half_angle: float = 1.5, regime_flags=None,
                  harmonic: bool = False, k0: float | None = None) -> FringeReport:
    """Full measurement: delta over several cuts outside the wedge, winding,
    Delta, gamma and (when kappa and the antibarrier density are known) J.

    ``harmonic`` models self-interference fringes near twice the wavenumber
    as a separate component in every fit (needed for interacting clouds at
    late times, where they dominate the centre of the image)."""
    cut_span = math.pi - max(exclusion_half_angle, 0.6)
    cuts = barrier_theta + math.pi + np.linspace(-cut_span, cut_span, n_cuts)
    delta, delta_err, fits = mean_fringe_spacing(img, r_window, cuts, k0=k0, harmonic=harmonic,
                                                 return_fits=True)
    k2 = float(np.median([f.k2 for f in fits])) if harmonic else None
    n = extract_winding(img, delta=delta, r_window=r_window, barrier_theta=barrier_theta,
                        exclusion_half_angle=exclusion_half_angle, k2=k2)
    jump = extract_jump(img, barrier_theta=barrier_theta,
                        exclusion_half_angle=exclusion_half_angle, delta=delta,
                        r_window=r_window, winding_n=n, fit_half_angle=fit_half_angle, k2=k2)
    ratio = jump.Delta / delta
    ratio_err = abs(ratio) * math.hypot(jump.Delta_err / jump.Delta if jump.Delta else 0.0,
                                        delta_err / delta)
    if jump.Delta == 0:
        ratio_err = jump.Delta_err / delta
    gamma = phase_drop_from_ratio(n, ratio)
    J = None
    if kappa is not None and density_at_antibarrier is not None:
        J = current_from_fringes(ratio, kappa, density_at_antibarrier)
    windows = {"r_lo": r_window[0], "r_hi": r_window[1],
               "exclusion": jump.exclusion_half_angle, "fit_half_angle": jump.fit_half_angle}
    return FringeReport(delta=delta, delta_err=delta_err, Delta=jump.Delta,
                        Delta_err=jump.Delta_err, ratio=ratio, ratio_err=ratio_err,
                        winding_n=n, gamma=gamma, gamma_err=TWO_PI * ratio_err, J=J,
                        fit_windows=windows, regime_flags=dict(regime_flags or {}),
                        length_unit_m=img.length_unit_m)


def write_report_csv(rows, path):
    rows = list(rows)
    if not rows:
        raise AnalysisError("no rows to write")
    keys = list(rows[0].keys())
    for row in rows[1:]:
        keys += [k for k in row if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for row in rows:
            w.writerow(row)
