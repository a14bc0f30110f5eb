"""Mean-field target trap in the two-dimensional effective Lagrangian
variational method (2D-LVM).

The 3D order parameter is written as Psi(x, y) times a normalised Gaussian
in z of width w with a quadratic phase b z^2.  In internal units
(hbar = m = r_S = 1) this gives

    i dPsi/dt = [-1/2 lap + V(x, y) + g / (sqrt(2 pi) w) |Psi|^2] Psi,
    w''       = 1 / w^3 - omega_z^2 w + g I / (sqrt(2 pi) N w^2),

with g = 4 pi a, I = int |Psi|^4 dA and int |Psi|^2 dA = N.  The z phase
curvature is b = w' / (2 w).

Real-time expansion is carried out in a lens (pseudo-conformal) frame:
Psi(x, t) = phi(x / lam, tau) exp(i lam' x^2 / (2 lam)) / lam with
lam = sqrt(1 + w0^2 t^2) and tau = arctan(w0 t) / w0.  Because the 2D cubic
equation is invariant under this map, phi obeys the same equation plus a
harmonic term w0^2 xi^2 / 2, so a fixed grid in xi follows a cloud that
grows by lam in the lab.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import hbar
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates
from scipy.optimize import brentq

from .config import Grid2D, TargetTrapParams
from .errors import AliasingError, ConvergenceError, NumericalError, ParameterError
from .expansion import ALIAS_FRACTION, WaveField2D, fft2, ifft2

TWO_PI = 2 * math.pi
SQRT_2PI = math.sqrt(TWO_PI)


# --------------------------------------------------------------------------
# trap model

@dataclass(frozen=True)
class TrapModel:
    """The target trap in internal units (lengths in r_S)."""

    omega_r: float
    omega_z: float
    g: float
    N: float
    disc_fraction: float
    disc_radius: float
    disc_profile: str
    disc_order: int
    disc_omega: float
    barrier_height: float
    barrier_width: float  # 1/e^2 full width
    barrier_theta: float = 0.0
    split_radius: float | None = None
    disc_offset: float = 0.0

    @classmethod
    def from_params(cls, p: TargetTrapParams, barrier: bool = True, barrier_theta: float = 0.0):
        T = p.time_unit
        e_unit = hbar / T  # internal energy unit hbar^2 / (m r_S^2)
        return cls(
            omega_r=p.omega_r * T,
            omega_z=p.omega_z * T,
            g=4 * math.pi * p.scattering_length_a / p.r_S,
            N=float(p.N_atoms),
            disc_fraction=p.disc_fraction,
            disc_radius=p.disc_radius / p.r_S,
            disc_profile=p.disc_profile,
            disc_order=p.disc_order,
            disc_omega=p.disc_omega * T,
            barrier_height=(p.barrier_height / e_unit) if barrier else 0.0,
            barrier_width=p.barrier_width / p.r_S,
            barrier_theta=barrier_theta,
        )

    @property
    def r_split(self):
        """Radius separating the disc and ring regions."""
        if self.split_radius is not None:
            return self.split_radius
        return 0.5 * (self.disc_radius + 1.0)

    def ring_potential(self, r):
        return 0.5 * self.omega_r ** 2 * (r - 1.0) ** 2

    def disc_potential(self, r):
        if self.disc_profile == "harmonic":
            return 0.5 * self.disc_omega ** 2 * r ** 2
        # flat bottom: super-Gaussian wall rising to the ring potential at the axis
        top = 0.5 * self.omega_r ** 2
        return top * (1.0 - np.exp(-(r / self.disc_radius) ** self.disc_order))

    def barrier_potential(self, r, theta):
        if self.barrier_height == 0.0:
            return np.zeros_like(r)
        d = theta - self.barrier_theta
        y = r * np.sin(d)
        radius = 0.5 * self.barrier_width
        shape = np.where(np.cos(d) > 0, np.exp(-2 * y ** 2 / radius ** 2), 0.0)
        return self.barrier_height * shape * ring_window(r, self.r_split)

    def potential(self, grid: Grid2D):
        R, TH = grid.polar()
        if self.disc_fraction > 0:
            V = np.minimum(self.ring_potential(R), self.disc_potential(R) + self.disc_offset)
        else:
            V = self.ring_potential(R)
        return V + self.barrier_potential(R, TH)

    def ring_mask(self, grid: Grid2D):
        R, _ = grid.polar()
        return R >= self.r_split

    def g2d(self, w):
        return self.g / (SQRT_2PI * w)


def ring_window(r, r_split, softness=0.02):
    """Smooth 0 -> 1 step at r_split."""
    return 0.5 * (1.0 + np.tanh((r - r_split) / softness))


# --------------------------------------------------------------------------
# state

@dataclass
class MeanFieldState:
    """2D-LVM state.  ``field`` is the lab-frame Psi normalised to N (its grid
    is in units of r_S), ``z_width`` and ``z_velocity`` are w and dw/dt in
    internal units.  ``lens`` holds (w0, lam, dlam/dt) when the field was
    produced in the lens frame, so that propagation can resume exactly."""

    field: WaveField2D
    z_width: float
    z_velocity: float
    mu: float | None
    trap: TrapModel
    params: TargetTrapParams
    lens: tuple | None = None
    info: dict = field(default_factory=dict)

    @property
    def length_unit_m(self):
        return self.params.r_S

    @property
    def time_unit_s(self):
        return self.params.time_unit

    @property
    def time(self):
        return self.field.time

    @property
    def time_s(self):
        return self.field.time * self.params.time_unit

    @property
    def z_phase_curvature(self):
        """b in exp(i b z^2), internal units (1 / r_S^2)."""
        return self.z_velocity / (2 * self.z_width)

    @property
    def chemical_potential_mu(self):
        """mu in joules."""
        if self.mu is None:
            return None
        return self.mu * hbar / self.params.time_unit

    @property
    def N(self):
        return self.field.norm


def _lens_frame(state: MeanFieldState):
    """(xi-grid, phi, w0, lam, lam_dot) for a state, lab states mapping to lam = 1."""
    if state.lens is None:
        return state.field.grid, state.field.amplitude, None, 1.0, 0.0
    w0, lam, lam_dot = state.lens
    xi_grid = state.field.grid.scaled(1.0 / lam)
    X, Y = xi_grid.mesh()
    phi = lam * state.field.amplitude * np.exp(-0.5j * lam * lam_dot * (X ** 2 + Y ** 2))
    return xi_grid, phi, w0, lam, lam_dot


def _lab_state(template, xi_grid, phi, t_release, t_abs, w0, w, wdot):
    """Lab-frame state from the lens-frame field ``t_release`` after release."""
    if w0 is None:
        return replace(template, field=WaveField2D(xi_grid, phi.copy(), t_abs), z_width=w,
                       z_velocity=wdot, lens=None, mu=None, info={})
    lam = math.sqrt(1 + (w0 * t_release) ** 2)
    lam_dot = w0 ** 2 * t_release / lam
    X, Y = xi_grid.mesh()
    psi = phi * np.exp(0.5j * lam * lam_dot * (X ** 2 + Y ** 2)) / lam
    return replace(template, field=WaveField2D(xi_grid.scaled(lam), psi, t_abs), z_width=w,
                   z_velocity=wdot, lens=(w0, lam, lam_dot), mu=None, info={})


# --------------------------------------------------------------------------
# functionals

def _laplacian_energy_density(grid: Grid2D, psi):
    KX, KY = grid.wavenumbers()
    F = fft2(psi)
    gx = ifft2(1j * KX * F)
    gy = ifft2(1j * KY * F)
    return gx, gy


def z_energy(w, wdot, omega_z):
    """Per-atom energy of the transverse Gaussian."""
    return 0.25 * wdot ** 2 + 0.25 / w ** 2 + 0.25 * omega_z ** 2 * w ** 2


def energy(state: MeanFieldState, trap_on: bool | None = None) -> dict:
    """Lab-frame energy contributions in internal units.

    With the trap on (a state that has never been propagated) the trap and
    transverse confinement are included; after release they are not.
    """
    if trap_on is None:
        trap_on = state.lens is None and state.field.time == 0.0
    trap = state.trap
    xi_grid, phi, w0, lam, lam_dot = _lens_frame(state)
    dA = xi_grid.pixel_area
    gx, gy = _laplacian_energy_density(xi_grid, phi)
    X, Y = xi_grid.mesh()
    # grad_x psi maps to (grad_xi phi / lam + i lam_dot xi phi) in the lens frame
    kin = 0.5 * np.sum(np.abs(gx / lam + 1j * lam_dot * X * phi) ** 2
                       + np.abs(gy / lam + 1j * lam_dot * Y * phi) ** 2) * dA
    dens = np.abs(phi) ** 2
    N = float(np.sum(dens) * dA)
    I_lab = float(np.sum(dens ** 2) * dA) / lam ** 2
    w = state.z_width
    inter = 0.5 * trap.g2d(w) * I_lab
    omega_z = trap.omega_z if trap_on else 0.0
    ez = N * z_energy(w, state.z_velocity, omega_z)
    out = {"kinetic": float(kin), "interaction": float(inter), "z": float(ez)}
    if trap_on:
        out["trap"] = float(np.sum(trap.potential(state.field.grid) * dens) * dA)
    out["total"] = float(sum(out.values()))
    return out


def equilibrium_width(trap: TrapModel, I: float, N: float):
    """w solving 1/w^3 - omega_z^2 w + g I / (sqrt(2 pi) N w^2) = 0."""
    c = trap.g * I / (SQRT_2PI * N) if N > 0 else 0.0
    wz = trap.omega_z

    def f(w):
        return 1.0 - wz ** 2 * w ** 4 + c * w

    lo = 1.0 / math.sqrt(wz)
    hi = lo
    while f(hi) > 0:
        hi *= 2
    if hi == lo:
        return lo
    return brentq(f, lo, hi, xtol=1e-15 * hi, rtol=1e-15)


def width_rhs(trap: TrapModel, N: float, omega_z: float):
    c = trap.g / (SQRT_2PI * N)

    def rhs(w, wdot, I):
        return wdot, 1.0 / w ** 3 - omega_z ** 2 * w + c * I / w ** 2

    return rhs


def _rk4_width(rhs, w, wdot, t0, t1, I0, I1, substeps):
    """Advance (w, w') from t0 to t1 with I(t) linear between I0 and I1."""
    h = (t1 - t0) / substeps
    span = t1 - t0

    def I_at(t):
        return I0 + (I1 - I0) * ((t - t0) / span if span else 0.0)

    t = t0
    for _ in range(substeps):
        k1 = rhs(w, wdot, I_at(t))
        k2 = rhs(w + 0.5 * h * k1[0], wdot + 0.5 * h * k1[1], I_at(t + 0.5 * h))
        k3 = rhs(w + 0.5 * h * k2[0], wdot + 0.5 * h * k2[1], I_at(t + 0.5 * h))
        k4 = rhs(w + h * k3[0], wdot + h * k3[1], I_at(t + h))
        w += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        wdot += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        t += h
    if not (w > 0 and math.isfinite(w)):
        raise NumericalError(f"transverse width became non-physical (w = {w})")
    return w, wdot


# --------------------------------------------------------------------------
# ground state

def _region_masks(trap: TrapModel, grid: Grid2D):
    ring = trap.ring_mask(grid)
    if trap.disc_fraction <= 0:
        return [(np.ones_like(ring), 1.0)]
    if trap.disc_fraction >= 1:
        return [(np.ones_like(ring), 1.0)]
    return [(~ring, trap.disc_fraction), (ring, 1.0 - trap.disc_fraction)]


def _renormalise(psi, masks, N, dA):
    for mask, frac in masks:
        n = np.sum(np.abs(psi[mask]) ** 2) * dA
        if n <= 0:
            raise NumericalError("region emptied during imaginary-time propagation")
        psi[mask] *= math.sqrt(frac * N / n)
    return psi


def _hamiltonian_action(grid, psi, V, g2d):
    Kpsi = ifft2(0.5 * grid.k_squared() * fft2(psi))
    return Kpsi + (V + g2d * np.abs(psi) ** 2) * psi


def stationary_residual(grid, psi, V, g2d, masks, dA):
    """Relative residual ||H psi - mu psi|| / ||mu psi|| with one mu per
    region, together with those chemical potentials (2D eigenvalues)."""
    Hpsi = _hamiltonian_action(grid, psi, V, g2d)
    r = Hpsi.copy()
    mus = []
    for mask, _ in masks:
        num = np.real(np.sum(np.conj(psi[mask]) * Hpsi[mask]))
        den = np.sum(np.abs(psi[mask]) ** 2)
        mu = num / den
        mus.append(float(mu))
        r[mask] -= mu * psi[mask]
    scale = np.zeros(psi.shape)
    for (mask, _), mu in zip(masks, mus):
        scale[mask] = abs(mu)
    return float(np.linalg.norm(r) / np.linalg.norm(scale * psi)), mus


def _thomas_fermi_guess(trap: TrapModel, grid: Grid2D, V, masks, dA):
    w = 1.0 / math.sqrt(trap.omega_z)
    mu = float(np.percentile(V, 5)) + 0.1 * trap.omega_r
    psi = np.sqrt(np.clip(mu - V, 0.0, None)) + 0j
    for _ in range(40):
        dens = np.abs(psi) ** 2
        total = np.sum(dens) * dA
        if total > 0:
            break
        mu *= 2
        psi = np.sqrt(np.clip(mu - V, 0.0, None)) + 0j
    psi += 1e-6 * np.max(np.abs(psi)) * np.exp(-V / max(mu, 1e-12))
    return _renormalise(psi, masks, trap.N, dA), w


@dataclass
class GroundStateInfo:
    energies: list
    residual: float
    steps: int
    dt_final: float
    mu_regions: list


def _split_step_ground(psi, w, trap, grid, V, masks, dt, nsteps):
    dA = grid.pixel_area
    kin = np.exp(-0.5 * dt * grid.k_squared())
    for _ in range(nsteps):
        # the mean-field potential is frozen at the normalised start-of-step
        # density so the split-step fixed point is second-order accurate
        half = np.exp(-0.5 * dt * (V + trap.g2d(w) * np.abs(psi) ** 2))
        psi = half * ifft2(kin * fft2(half * psi))
        psi = _renormalise(psi, masks, trap.N, dA)
        w = equilibrium_width(trap, float(np.sum(np.abs(psi) ** 4) * dA), trap.N)
    return psi, w


def imaginary_time_ground_state(p: TargetTrapParams, grid: Grid2D, tol: float = 1e-5,
                                barrier: bool = True, dt: float | None = None,
                                max_steps: int = 40000, min_dt: float | None = None,
                                check_every: int = 50, trap: TrapModel | None = None,
                                initial: np.ndarray | None = None) -> MeanFieldState:
    """Ground state of the target trap with a stationary barrier.

    Symmetric split-step imaginary-time propagation of the effective 2D
    equation, renormalising the disc and ring populations separately after
    every step.  The disc floor is shifted by a constant (``disc_offset`` of
    the returned trap) chosen so that both regions share one chemical
    potential; this plays the role of the experimental disc depth, which is
    not given.  After every step the transverse width is set to the
    stationary point of its evolution equation for the current |Psi|^4
    integral.  The split-step fixed point differs from the eigenstate by
    O(dt^2), so the step is halved whenever the residual stops improving.
    """
    trap = trap or TrapModel.from_params(p, barrier=barrier)
    dA = grid.pixel_area
    masks = _region_masks(trap, grid)
    V = trap.potential(grid)
    if initial is None:
        psi, w = _thomas_fermi_guess(trap, grid, V, masks, dA)
    else:
        psi = _renormalise(np.array(initial, dtype=complex), masks, trap.N, dA)
    w = equilibrium_width(trap, float(np.sum(np.abs(psi) ** 4) * dA), trap.N)
    if dt is None:
        dens = np.abs(psi) ** 2
        scale = max(trap.omega_z, trap.g2d(w) * float(np.max(dens)))
        dt = 1.0 / scale
    if min_dt is None:
        min_dt = dt / 1024

    # equalise the chemical potentials by moving the disc floor
    if len(masks) == 2:
        for _ in range(30):
            psi, w = _split_step_ground(psi, w, trap, grid, V, masks, dt, check_every)
            _, mus = stationary_residual(grid, psi, V, trap.g2d(w), masks, dA)
            shift = mus[1] - mus[0]
            trap = replace(trap, disc_offset=trap.disc_offset + shift)
            V = trap.potential(grid)
            if abs(shift) < 1e-4 * abs(mus[1]):
                break

    def state_energy(psi, w):
        st = MeanFieldState(WaveField2D(grid, psi, 0.0), w, 0.0, None, trap, p)
        return energy(st, trap_on=True)["total"]

    energies = [state_energy(psi, w)]
    residual, mus = stationary_residual(grid, psi, V, trap.g2d(w), masks, dA)
    residuals = [residual]
    steps = 0
    while residual >= tol and steps < max_steps:
        psi, w = _split_step_ground(psi, w, trap, grid, V, masks, dt, check_every)
        steps += check_every
        energies.append(state_energy(psi, w))
        residual, mus = stationary_residual(grid, psi, V, trap.g2d(w), masks, dA)
        if residual > 0.995 * residuals[-1]:
            if dt / 2 < min_dt:
                residuals.append(residual)
                break
            dt /= 2
        residuals.append(residual)
    if residual >= tol:
        raise ConvergenceError(
            f"imaginary-time propagation did not reach residual {tol:g} "
            f"(residual {residual:.3g} after {steps} steps, dt {dt:.3g})", trace=energies)

    ez = z_energy(w, 0.0, trap.omega_z)
    info = GroundStateInfo(energies=energies, residual=residual, steps=steps, dt_final=dt,
                           mu_regions=[m + ez for m in mus])
    return MeanFieldState(WaveField2D(grid, psi, 0.0), w, 0.0, mus[-1] + ez, trap, p,
                          info={"ground": info, "residuals": residuals})


# --------------------------------------------------------------------------
# angular profile and phase imprint

def angular_density_profile(state: MeanFieldState, r_window=None, n_theta: int = 1024,
                            n_r: int | None = None):
    """(theta, rho) with rho(theta) = int r dr |Psi|^2 over the ring window.

    theta runs over [-pi, pi] (both ends) measured from the barrier axis.
    The polar quadrature is rescaled to the pixel sum over the window so
    that int rho dtheta equals the ring atom number.
    """
    trap = state.trap
    grid = state.field.grid
    if r_window is None:
        r_window = (trap.r_split, grid.half_extent)
    r_lo, r_hi = r_window
    if r_lo < trap.r_split:
        raise ParameterError(f"radial window starts at {r_lo:.3g}, inside the disc region "
                             f"(boundary {trap.r_split:.3g})")
    dens = np.abs(state.field.amplitude) ** 2
    if n_r is None:
        n_r = max(64, int(4 * (r_hi - r_lo) / grid.pixel_pitch))
    r = np.linspace(r_lo, r_hi, n_r)
    theta = np.linspace(-math.pi, math.pi, n_theta) + trap.barrier_theta
    Rg, Tg = np.meshgrid(r, theta, indexing="xy")
    col = (Rg * np.cos(Tg) - grid.x[0]) / grid.pixel_pitch
    row = (Rg * np.sin(Tg) - grid.y[0]) / grid.pixel_pitch
    vals = map_coordinates(dens, [row.ravel(), col.ravel()], order=3, mode="constant")
    vals = np.clip(vals.reshape(Rg.shape), 0.0, None)
    rho = np.trapezoid(vals * r[None, :], r, axis=1)
    R, _ = grid.polar()
    inside = (R >= r_lo) & (R <= r_hi)
    target = float(np.sum(dens[inside]) * grid.pixel_area)
    total = float(np.trapezoid(rho, theta))
    if total > 0:
        rho *= target / total
    return theta - trap.barrier_theta, rho


@dataclass
class ImprintSolution:
    theta: np.ndarray
    zeta: np.ndarray
    J_imprint: float
    slope_s: float
    gamma: float
    winding_n: int
    kappa: float
    rho: np.ndarray = field(repr=False, default=None)

    def __call__(self, theta):
        """zeta at arbitrary angles (periodic spline of zeta - n theta)."""
        n = self.winding_n
        base = self.zeta - n * self.theta
        spline = CubicSpline(self.theta, base, bc_type="periodic")
        t = (np.asarray(theta) + math.pi) % TWO_PI - math.pi
        return spline(t) + n * t

    def discrete_current(self):
        """rho_hm (dzeta/dtheta - kappa) on each grid interval, with rho_hm
        the harmonic mean of the interval end points."""
        d = np.diff(self.theta)
        rho_hm = 2.0 / (1.0 / self.rho[:-1] + 1.0 / self.rho[1:])
        return rho_hm * (np.diff(self.zeta) / d - self.kappa)


def imprint_phase(rho, kappa: float, n: int, theta=None) -> ImprintSolution:
    """Phase zeta(theta) carrying a uniform current through the density rho.

    ``rho`` is sampled on ``theta`` (default: uniform over [-pi, pi] with both
    ends, periodic).  J = 2 pi (n - kappa) / closed-integral(dtheta / rho)
    in the units of rho times r_S Omega_0; zeta is built from the trapezoid
    increments, so the discrete hydrodynamic current is exactly uniform and
    zeta(pi) - zeta(-pi) = 2 pi n.
    """
    rho = np.asarray(rho, dtype=float)
    if theta is None:
        theta = np.linspace(-math.pi, math.pi, rho.size)
    theta = np.asarray(theta, dtype=float)
    if not math.isclose(theta[-1] - theta[0], TWO_PI, rel_tol=1e-12):
        raise ParameterError("theta must span one full period including both end points")
    if np.any(~np.isfinite(rho)) or np.min(rho) <= 0:
        raise ParameterError("density touches zero on the ring; the imprint is invalid "
                             "(barrier above the chemical potential)")
    if not math.isclose(rho[0], rho[-1], rel_tol=1e-6):
        raise ParameterError("rho is not periodic: rho(-pi) != rho(pi)")
    d = np.diff(theta)
    inv = 0.5 * d * (1.0 / rho[:-1] + 1.0 / rho[1:])
    J = TWO_PI * (n - kappa) / float(np.sum(inv))
    zeta = np.concatenate(([0.0], np.cumsum(kappa * d + J * inv)))
    # pin the exact endpoint value against round-off
    zeta[-1] = zeta[0] + TWO_PI * n
    s = kappa + J / rho[0]
    return ImprintSolution(theta=theta, zeta=zeta, J_imprint=float(J), slope_s=float(s),
                           gamma=float(TWO_PI * (n - s)), winding_n=int(n), kappa=float(kappa),
                           rho=rho)


def apply_imprint(state: MeanFieldState, sol: ImprintSolution, phase_offset: float = 0.0):
    """Psi_Stat exp(i zeta) with zeta = zeta(theta) on the ring and 0 on the
    disc; ``phase_offset`` is an extra constant ring-versus-disc phase."""
    grid = state.field.grid
    R, TH = grid.polar()
    W = ring_window(R, state.trap.r_split)
    zeta = (sol(TH - state.trap.barrier_theta) + phase_offset) * W
    amp = np.abs(state.field.amplitude) * np.exp(1j * zeta)
    return replace(state, field=WaveField2D(grid, amp, state.field.time),
                   info={**state.info, "imprint": sol})


@dataclass
class ImprintRegime:
    barrier_below_mu: bool
    healing_small: bool
    subsonic: bool
    barrier_over_mu: float
    healing_over_width: float
    speed_over_sound: float
    healing_length: float
    sound_speed: float

    @property
    def ok(self):
        return self.barrier_below_mu and self.healing_small and self.subsonic


def validate_imprint_regime(p: TargetTrapParams, mu: float) -> ImprintRegime:
    """Checks for the imprint construction; ``mu`` in joules."""
    m = p.atom_mass
    ell = hbar / math.sqrt(2 * m * mu)
    c = math.sqrt(mu / m)
    b = p.barrier_height / mu
    hw = ell / p.barrier_width
    v = abs(p.Omega) * p.r_S / c
    return ImprintRegime(barrier_below_mu=b < 1.0, healing_small=hw < 0.2, subsonic=v < 0.5,
                         barrier_over_mu=b, healing_over_width=hw, speed_over_sound=v,
                         healing_length=ell, sound_speed=c)


# --------------------------------------------------------------------------
# real-time expansion

def scaling_lambda(t, omega):
    return np.sqrt(1.0 + (np.asarray(omega) * np.asarray(t)) ** 2)


def radial_velocity(r, t, omega, r_S=1.0):
    """Self-similar radial velocity (1 - lam^-2)(r - r_S)/t."""
    t = np.asarray(t, dtype=float)
    lam = scaling_lambda(t, omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (1 - lam ** -2) * (np.asarray(r) - r_S) / t
    return np.where(t > 0, out, 0.0)


def default_lens_rate(state: MeanFieldState, t_final: float | None = None, spread: float = 4.0,
                      tail: float = 1e-5):
    """Lens rate w0 for the expanding frame.

    At late times the xi-frame cloud settles at a size of about v / w0.  The
    rate is the larger of ``spread`` RMS release speeds per half-extent (the
    speed from the kinetic plus interaction energy per atom) and the speed
    below which all but ``tail`` of the initial momentum distribution lies,
    placed at 0.9 of the half-extent.  The second term matters without
    interactions, where sharp potential walls leave slowly decaying tails.
    """
    e = energy(state, trap_on=False)
    v = math.sqrt(2 * max(e["kinetic"] + e["interaction"], 1e-300) / state.N)
    grid = state.field.grid
    P = np.abs(fft2(state.field.amplitude)).ravel() ** 2
    k = np.sqrt(grid.k_squared()).ravel()
    order = np.argsort(k)
    cum = np.cumsum(P[order])
    v_tail = float(k[order][min(np.searchsorted(cum, (1 - tail) * cum[-1]), k.size - 1)])
    return max(spread * v / grid.half_extent, v_tail / (0.9 * grid.half_extent), 1e-9)


def _ring_extent_check(phi, grid, fraction=ALIAS_FRACTION):
    dens = np.abs(phi) ** 2
    X, Y = grid.mesh()
    n = np.sum(dens)
    rms = math.sqrt(float(np.sum(dens * (X ** 2 + Y ** 2)) / n))
    edge = np.concatenate([dens[:2].ravel(), dens[-2:].ravel(), dens[:, :2].ravel(),
                           dens[:, -2:].ravel()])
    if rms > fraction * grid.half_extent or np.max(edge) > 1e-6 * np.max(dens):
        raise AliasingError(
            f"cloud reaches the grid edge (RMS radius {rms:.3g} of half-extent "
            f"{grid.half_extent:.3g}); enlarge the grid or change the lens rate")


def expand_gpe(state: MeanFieldState, times, dt: float, frame: str = "lens",
               lens_rate: float | None = None, width_substeps: int = 4,
               check: bool = True, record_every: int = 0):
    """Release the trap at ``state.time`` and evolve to each time in
    ``times`` (internal units, measured from release); returns one state per
    requested time.

    ``dt`` bounds the step in the evolution variable (tau in the lens frame,
    which equals t at release and is smaller afterwards).  In the lab frame
    the field stays on the input grid and an interaction-free run reduces
    exactly to the free spectral propagator.
    """
    times = sorted(float(t) for t in times)
    if not times or times[0] < 0:
        raise ParameterError("expansion times must be non-negative")
    if frame not in ("lens", "lab"):
        raise ParameterError(f"unknown frame {frame!r}")
    trap = state.trap
    if state.lens is not None:
        raise ParameterError("expand_gpe starts from a trapped (lab-frame) state; "
                             "use propagate_gpe to continue a lens-frame state")
    N = state.N
    grid = state.field.grid
    phi = state.field.amplitude.copy()
    dA = grid.pixel_area
    peak = float(np.max(np.abs(phi) ** 2))
    mu_scale = abs(state.mu) if state.mu is not None else trap.g2d(state.z_width) * peak
    if dt * mu_scale > 0.1:
        raise ParameterError(f"time step too large: dt * mu = {dt * mu_scale:.3g} > 0.1")

    w0 = None
    if frame == "lens":
        w0 = lens_rate if lens_rate is not None else default_lens_rate(state, times[-1])
        taus = [math.atan(w0 * t) / w0 for t in times]
        X, Y = grid.mesh()
        V_frame = 0.5 * w0 ** 2 * (X ** 2 + Y ** 2)
    else:
        taus = list(times)
        V_frame = 0.0
    kin_cache = {}
    rhs = width_rhs(trap, N, 0.0)
    w, wdot = state.z_width, state.z_velocity
    tau = 0.0
    t = 0.0
    lam = 1.0
    dens = phi.real ** 2 + phi.imag ** 2
    I = float(np.sum(dens ** 2) * dA)
    owed = 0.0
    out = []
    trace = []
    steps = 0
    for tau_target, t_target in zip(taus, times):
        span = tau_target - tau
        nsteps = max(1, math.ceil(span / dt - 1e-9)) if span > 0 else 0
        h = span / nsteps if nsteps else 0.0
        if nsteps and h not in kin_cache:
            kin_cache[h] = np.exp(-0.5j * h * grid.k_squared())
        for _ in range(nsteps):
            # the trailing half of the previous nonlinear step uses the same
            # density and width as the leading half of this one: merge them
            phase = owed + 0.5 * h
            phi *= np.exp(-1j * phase * (V_frame + trap.g2d(w) * dens))
            phi = ifft2(kin_cache[h] * fft2(phi))
            tau_new = tau + h
            if w0 is None:
                t_new = tau_new
                lam_new = 1.0
            else:
                t_new = math.tan(w0 * tau_new) / w0
                lam_new = math.sqrt(1 + (w0 * t_new) ** 2)
            dens = phi.real ** 2 + phi.imag ** 2
            I_new = float(np.sum(dens ** 2) * dA) / lam_new ** 2
            w, wdot = _rk4_width(rhs, w, wdot, t, t_new, I, I_new, width_substeps)
            owed = 0.5 * h
            tau, t, lam, I = tau_new, t_new, lam_new, I_new
            steps += 1
            if not np.isfinite(I):
                raise NumericalError(f"field diverged at t = {t:.4g}")
            if record_every and steps % record_every == 0:
                trace.append((t, w, wdot))
        if owed:
            phi *= np.exp(-1j * owed * (V_frame + trap.g2d(w) * dens))
            owed = 0.0
        t = t_target if nsteps else t
        if check:
            _ring_extent_check(phi, grid)
        st = _lab_state(state, grid, phi, t, state.time + t, w0, w, wdot)
        st.info = {"steps": steps, "frame": frame, "lens_rate": w0, "release_time": state.time,
                   "width_trace": list(trace)}
        out.append(st)
    return out


def propagate_gpe(state: MeanFieldState, t_final: float, dt: float, frame: str = "lens",
                  lens_rate: float | None = None, **kw) -> MeanFieldState:
    """Expansion from a trapped state to ``t_final`` after release."""
    return expand_gpe(state, [t_final], dt, frame=frame, lens_rate=lens_rate, **kw)[-1]


# --------------------------------------------------------------------------
# mean-field timescales and widths

@dataclass
class MFTimescales:
    tau_B: float
    tau_C: float
    tau_C_single: float

    @property
    def ratio(self):
        """tau~_C / tau_C = sigma_S / sigma_TF."""
        return self.tau_C / self.tau_C_single


def mf_timescales(p: TargetTrapParams, sigma_TF: float, r: float) -> MFTimescales:
    """Interacting-gas ballistic and self-interference times (SI)."""
    tau_B = 1.0 / p.omega_r
    tau_C = (r + p.r_S) / (p.omega_r * sigma_TF)
    tau_C_single = p.atom_mass * p.sigma_S * (r + p.r_S) / hbar
    return MFTimescales(tau_B=tau_B, tau_C=tau_C, tau_C_single=tau_C_single)


def radial_profile(state: MeanFieldState, r_window=None, n_r: int = 400, n_theta: int = 256):
    """Azimuthally averaged density on a radial grid (lab units of r_S)."""
    grid = state.field.grid
    if r_window is None:
        r_window = (0.0, grid.half_extent)
    r = np.linspace(r_window[0], r_window[1], n_r)
    theta = np.linspace(-math.pi, math.pi, n_theta, endpoint=False)
    Rg, Tg = np.meshgrid(r, theta, indexing="xy")
    col = (Rg * np.cos(Tg) - grid.x[0]) / grid.pixel_pitch
    row = (Rg * np.sin(Tg) - grid.y[0]) / grid.pixel_pitch
    dens = np.abs(state.field.amplitude) ** 2
    vals = map_coordinates(dens, [row.ravel(), col.ravel()], order=3, mode="constant")
    return r, vals.reshape(Rg.shape).mean(axis=0)


def thomas_fermi_width(state: MeanFieldState, r_window=None, core_fraction: float = 0.5):
    """Ring half-width where a linear fit of n against (r - r_S)^2, over the
    core where n exceeds ``core_fraction`` of its peak, reaches zero."""
    trap = state.trap
    if r_window is None:
        r_window = (trap.r_split, min(2.0, state.field.grid.half_extent))
    r, n = radial_profile(state, r_window)
    core = n > core_fraction * n.max()
    if core.sum() < 5:
        raise NumericalError("too few points in the ring core for a Thomas-Fermi fit")
    r0 = float(np.sum(r[core] * n[core]) / np.sum(n[core]))
    x = (r[core] - r0) ** 2
    slope, icpt = np.polyfit(x, n[core], 1)
    if slope >= 0:
        raise NumericalError("ring profile is not concave; Thomas-Fermi fit failed")
    return math.sqrt(-icpt / slope), r0


def radial_rms_width(state: MeanFieldState, r_window=None, center: float | None = None):
    """Second-moment half-width of the azimuthally averaged ring profile
    (weighted by r dr)."""
    r, n = radial_profile(state, r_window, n_r=800)
    wts = n * r
    c = center if center is not None else float(np.sum(wts * r) / np.sum(wts))
    return math.sqrt(float(np.sum(wts * (r - c) ** 2) / np.sum(wts)))


def disc_radius_tf(state: MeanFieldState, level: float = 0.05):
    """Radius where the azimuthally averaged disc density falls to ``level``
    of its central value."""
    r, n = radial_profile(state, (0.0, state.trap.r_split), n_r=600)
    n0 = n[: max(3, len(n) // 50)].mean()
    below = np.nonzero(n < level * n0)[0]
    if below.size == 0:
        raise NumericalError("disc density does not fall off inside the disc region")
    return float(r[below[0]])


# --------------------------------------------------------------------------
# checkpoints

def save_checkpoint(state: MeanFieldState, path):
    g = state.field.grid
    np.savez_compressed(
        path, amplitude=state.field.amplitude, nx=g.nx, ny=g.ny, extent=g.extent,
        z_width=state.z_width, z_velocity=state.z_velocity,
        mu=np.nan if state.mu is None else state.mu, time=state.field.time,
        params_hash=state.params.params_hash(), barrier_height=state.trap.barrier_height,
        barrier_theta=state.trap.barrier_theta, disc_offset=state.trap.disc_offset)


def load_checkpoint(path, p: TargetTrapParams, barrier: bool = True) -> MeanFieldState:
    from .config import Grid2D as _G

    with np.load(path) as d:
        if str(d["params_hash"]) != p.params_hash():
            raise ParameterError(f"checkpoint {path} was made with different parameters")
        grid = _G(int(d["nx"]), int(d["ny"]), float(d["extent"]))
        trap = TrapModel.from_params(p, barrier=barrier, barrier_theta=float(d["barrier_theta"]))
        trap = replace(trap, disc_offset=float(d["disc_offset"]))
        if not math.isclose(trap.barrier_height, float(d["barrier_height"]), rel_tol=1e-12,
                            abs_tol=1e-300):
            raise ParameterError("checkpoint barrier does not match the requested trap")
        mu = float(d["mu"])
        return MeanFieldState(WaveField2D(grid, d["amplitude"].copy(), float(d["time"])),
                              float(d["z_width"]), float(d["z_velocity"]),
                              None if math.isnan(mu) else mu, trap, p)
