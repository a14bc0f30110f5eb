"""Free expansion of the single-particle disc + ring superposition.

Internal units throughout (hbar = m = r_S = 1).  The exact propagator is
spectral: one multiplication of the 2D spectrum by exp(-i k^2 t / 2).  The
closed-form reference Gaussian and the leading-order steepest-descent
expression for the ring are provided for comparison and for the timescale
analysis.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from .config import DimensionlessParams, Grid2D
from .errors import AliasingError, ParameterError, RegimeWarning
from .ring import RingEigenstate

TWO_PI = 2 * math.pi

# Cloud RMS radius must stay below this fraction of the grid half-extent.
ALIAS_FRACTION = 0.7
# Minimum pixels per initial Gaussian width.  At 1.5 the momentum-space
# amplitude at the Nyquist edge, exp(-(k_max sigma)^2 / 2), is below 2e-5.
MIN_PIXELS_PER_SIGMA = 1.5


def fft_workers():
    """Thread count for FFTs, from RINGSQUID_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("RINGSQUID_THREADS", "1")))
    except ValueError:
        return 1


def fft2(a):
    return sfft.fft2(a, workers=fft_workers())


def ifft2(a):
    return sfft.ifft2(a, workers=fft_workers())


@dataclass
class WaveField2D:
    grid: Grid2D
    amplitude: np.ndarray
    time: float = 0.0

    @property
    def norm(self):
        return float(np.sum(np.abs(self.amplitude) ** 2) * self.grid.pixel_area)

    @property
    def density(self):
        return np.abs(self.amplitude) ** 2

    def rms_radius(self):
        R, _ = self.grid.polar()
        d = self.density
        return float(math.sqrt(np.sum(d * R ** 2) / np.sum(d)))

    def copy(self):
        return replace(self, amplitude=self.amplitude.copy())


@dataclass(frozen=True)
class Timescales:
    tau_B: float
    tau_C: float
    tau_S: float
    r: float


def timescales(p: DimensionlessParams | float, r: float) -> Timescales:
    """Ballistic, self-interference and steepest-descent times at radius r.

    ``p`` may be a DimensionlessParams or the science width sigma_S directly.
    """
    if not r > 0:
        raise ParameterError("r must be positive")
    sigma_S = p.sigma_S_hat if isinstance(p, DimensionlessParams) else float(p)
    return Timescales(tau_B=sigma_S ** 2, tau_C=sigma_S * (r + 1.0), tau_S=float(r), r=float(r))


def ordering_radius(sigma_S):
    """Radius beyond which tau_B < tau_C(r) < tau_S(r) is guaranteed."""
    return sigma_S * (1 + math.sqrt(1 + 4 / sigma_S)) / 2


# --------------------------------------------------------------------------
# initial state

def initial_components(sigma_R: float, sigma_S: float, ring: RingEigenstate, grid: Grid2D):
    """Reference and science parts, each normalised to 1/2 on the grid."""
    pitch = grid.pixel_pitch
    need = min(sigma_R, sigma_S) / MIN_PIXELS_PER_SIGMA
    if pitch > need:
        raise ParameterError(
            f"grid pitch {pitch:.4g} under-resolves the initial widths; "
            f"need pitch <= {need:.4g} (r_S units)")
    R, TH = grid.polar()
    psi_R = np.exp(-R ** 2 / (2 * sigma_R ** 2)) / math.sqrt(TWO_PI) + 0j
    psi_S = np.exp(-(R - 1.0) ** 2 / (2 * sigma_S ** 2)) * ring(TH)
    dA = grid.pixel_area
    psi_R *= math.sqrt(0.5 / (np.sum(np.abs(psi_R) ** 2) * dA))
    psi_S *= math.sqrt(0.5 / (np.sum(np.abs(psi_S) ** 2) * dA))
    return psi_R, psi_S


def build_initial_superposition(p: DimensionlessParams | tuple, ring: RingEigenstate,
                                grid: Grid2D) -> WaveField2D:
    """Normalised (psi_R + psi_S) on the grid.

    ``p`` supplies sigma_R and sigma_S in units of r_S; a plain
    ``(sigma_R, sigma_S)`` tuple is accepted too.
    """
    if isinstance(p, DimensionlessParams):
        sigma_R, sigma_S = p.sigma_R_hat, p.sigma_S_hat
        if not math.isclose(p.kappa, ring.kappa, rel_tol=1e-12, abs_tol=1e-12) or \
                not math.isclose(p.U, ring.U, rel_tol=1e-12, abs_tol=1e-12):
            raise ParameterError("ring state was solved at a different (kappa, U)")
    else:
        sigma_R, sigma_S = p
    psi_R, psi_S = initial_components(sigma_R, sigma_S, ring, grid)
    overlap = abs(np.sum(np.conj(psi_R) * psi_S) * grid.pixel_area)
    if overlap >= 1e-6:
        raise ParameterError(f"reference and science parts overlap ({overlap:.2e}); "
                             "widths are too large for the ring radius")
    return WaveField2D(grid, psi_R + psi_S, 0.0)


# --------------------------------------------------------------------------
# propagation

def free_phase(grid: Grid2D, t: float):
    return np.exp(-0.5j * grid.k_squared() * t)


def check_aliasing(field: WaveField2D, fraction: float = ALIAS_FRACTION):
    rms = field.rms_radius()
    if rms > fraction * field.grid.half_extent:
        raise AliasingError(
            f"cloud RMS radius {rms:.4g} exceeds {fraction:.0%} of the grid half-extent "
            f"{field.grid.half_extent:.4g}; increase the extent to at least "
            f"{2 * rms / fraction:.4g}")


def propagate_free_fft(psi: WaveField2D, t: float, check: bool = True) -> WaveField2D:
    """Exact free evolution over time t in a single spectral step."""
    if t == 0:
        return psi.copy()
    out = ifft2(fft2(psi.amplitude) * free_phase(psi.grid, t))
    field = WaveField2D(psi.grid, out, psi.time + t)
    if check:
        check_aliasing(field)
    return field


# --------------------------------------------------------------------------
# closed forms

def _radial_norm(func, r_max):
    val, _ = integrate.quad(lambda r: abs(func(r)) ** 2 * r, 0.0, r_max, limit=400)
    return math.sqrt(TWO_PI * val)


def reference_evolution(r, t: float, sigma_R: float):
    """Freely expanded reference Gaussian, unit normalised over the plane.

    The normaliser's modulus comes from radial quadrature; its phase is
    arg(sigma_R^2(t)), which makes the result coincide with exact evolution
    of a real Gaussian at t = 0.
    """
    if t < 0:
        raise ParameterError("t must be >= 0")
    width2 = sigma_R ** 2 + 1j * t
    func = lambda rr: np.exp(-rr ** 2 / (2 * width2))  # noqa: E731
    r_max = 12 * math.sqrt(abs(width2) ** 2 / sigma_R ** 2)
    n1 = _radial_norm(func, r_max) * np.exp(1j * np.angle(width2))
    return func(np.asarray(r, dtype=float)) / n1


def reference_width(t: float, sigma_R: float):
    """|sigma_R^2(t)|^(1/2), the modulus of the complex width."""
    return math.sqrt(abs(sigma_R ** 2 + 1j * t))


@dataclass
class AsymptoticField:
    values: np.ndarray
    in_regime: np.ndarray
    t: float
    tau_B: float

    @property
    def regime_ok(self):
        return bool(np.all(self.in_regime))


def asymptotic_science(r, theta, t: float, ring: RingEigenstate, sigma_S: float,
                       norm: float = 1.0, antipodal_factor: complex = 1.0) -> AsymptoticField:
    """Leading-order steepest-descent form of the expanding ring.

    Two complex-width Gaussians centred at +/- r_S carrying phi(theta) and
    phi(theta + pi), over sqrt(r).  The normaliser's modulus comes from
    quadrature and its phase from the radial Gaussian spreading factor.
    Points outside 5 tau_B < t < tau_S(r) / 5 are flagged and a RegimeWarning
    is emitted.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    tau_B = sigma_S ** 2
    width2 = sigma_S ** 2 * (1 + 1j * t / tau_B)

    def radial(rr):
        return np.exp(-(rr - 1) ** 2 / (2 * width2)), np.exp(-(rr + 1) ** 2 / (2 * width2))

    th = ring.theta_grid[:-1]
    h = th[1] - th[0]
    cross = np.sum(ring(th) * np.conj(ring(th + math.pi))) * h
    w = abs(antipodal_factor)

    def integrand(rr):
        a, b = radial(rr)
        return (abs(a) ** 2 + w ** 2 * abs(b) ** 2
                + 2 * np.real(a * np.conj(antipodal_factor * b) * cross))

    r_max = 1 + 14 * math.sqrt(abs(width2) ** 2 / sigma_S ** 2)
    total, _ = integrate.quad(integrand, 0.0, r_max, limit=400, points=[1.0])
    # 1D Gaussian spreading phase along the radial direction.
    n2 = math.sqrt(total / norm) * np.exp(0.5j * np.angle(width2))

    a, b = radial(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = (a * ring(theta) + antipodal_factor * b * ring(theta + math.pi)) / (n2 * np.sqrt(r))
    in_regime = (t > 5 * tau_B) & (t < r / 5)
    if not np.all(in_regime):
        warnings.warn(f"asymptotic form evaluated outside 5 tau_B < t < tau_S(r)/5 at "
                      f"{np.size(in_regime) - np.count_nonzero(in_regime)} points",
                      RegimeWarning, stacklevel=2)
    return AsymptoticField(values=vals, in_regime=np.broadcast_to(in_regime, vals.shape),
                           t=t, tau_B=tau_B)


def phase_aligned_error(approx, exact):
    """Relative L2 distance after removing the best global phase."""
    approx = np.asarray(approx).ravel()
    exact = np.asarray(exact).ravel()
    overlap = np.vdot(approx, exact)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(approx * phase - exact) / np.linalg.norm(exact))


# --------------------------------------------------------------------------
# spiral geometry

def ring_phase_function(ring: RingEigenstate):
    """Monotone (unwrapped) arg phi(theta), zero at theta = -pi, extended
    beyond one period by adding 2 pi n per turn."""
    theta = ring.theta_grid
    phase = np.unwrap(np.angle(ring.phi))
    phase = phase - phase[0]
    total = TWO_PI * ring.winding_n
    # At exactly half-integer kappa the density vanishes on the barrier and
    # the unwrap may pick the wrong branch; put the missing 2 pi there.
    phase = phase + np.where(theta >= 0, total - phase[-1], 0.0)

    def arg_of_u(u):
        u = np.asarray(u, dtype=float)
        turns = np.floor(u / TWO_PI)
        frac = u - turns * TWO_PI
        return np.interp(frac - math.pi, theta, phase) + total * turns

    return arg_of_u


def spiral_contour(xi0: float, t: float, ring: RingEigenstate, n_points: int = 1000,
                   n_turns: float = 1.0):
    """Constant-phase curve r(u) = (xi0 + arg phi(theta(u))) t,
    theta(u) = -pi + u mod 2 pi, sampled for u in [0, 2 pi n_turns]."""
    u = np.linspace(0.0, TWO_PI * n_turns, n_points)
    arg = ring_phase_function(ring)(u)
    r = (xi0 + arg) * t
    theta = np.mod(u, TWO_PI) - math.pi
    return r, theta


def auto_xi0(density: np.ndarray, grid: Grid2D, t: float, ring: RingEigenstate,
             r_window: tuple, n_scan: int = 64):
    """Pick xi0 so the contour runs along the brightest fringe in r_window."""
    from scipy.ndimage import map_coordinates

    r_lo, r_hi = r_window
    best, best_val = 0.0, -np.inf
    start = r_lo / t
    for xi in start + np.linspace(0.0, TWO_PI, n_scan, endpoint=False):
        r, th = spiral_contour(xi, t, ring, n_points=720)
        keep = (r >= r_lo) & (r <= r_hi)
        if keep.sum() < 10:
            continue
        col = (r[keep] * np.cos(th[keep]) - grid.x[0]) / grid.pixel_pitch
        row = (r[keep] * np.sin(th[keep]) - grid.y[0]) / grid.pixel_pitch
        val = map_coordinates(density, [row, col], order=1).mean()
        if val > best_val:
            best, best_val = xi, val
    return best
