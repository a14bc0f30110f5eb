"""Rotating-frame ground state of a ring with a delta barrier.

Solves  [-d^2/dtheta^2 + 2 i kappa d/dtheta + U delta(theta)] phi = E phi
on the periodic interval [-pi, pi] (energies in units of E_0).

On the open cell (0, 2 pi) the solution is a sum of plane waves
exp[i (kappa +/- q) theta] with q = sqrt(E + kappa^2); continuity at the
barrier and the derivative jump phi'(0+) - phi'(0-) = U phi(0) give a 2x2
homogeneous system whose determinant vanishes on the Kronig-Penney curve

    cos(2 pi kappa) = cos(2 pi q) + U sin(2 pi q) / (2 q).

The lowest root in q lies in (0, 1/2], so epsilon(kappa) = q^2 is
manifestly periodic in kappa with period one.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ParameterError, RootFindError

TWO_PI = 2 * math.pi


def dispersion(q, kappa, U):
    """Kronig-Penney residual; zero at allowed q for Bloch phase 2 pi kappa."""
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinc_term = np.where(q > 0, np.sin(TWO_PI * q) / (2 * np.where(q > 0, q, 1.0)), math.pi)
    return np.cos(TWO_PI * q) + U * sinc_term - math.cos(TWO_PI * kappa)


def matching_matrix(q, kappa, U):
    """Matching conditions acting on the plane-wave amplitudes (A, B)."""
    ep = 1 - np.exp(1j * TWO_PI * (kappa + q))
    em = 1 - np.exp(1j * TWO_PI * (kappa - q))
    return np.array([[ep, em],
                     [1j * q * ep - U, -1j * q * em - U]], dtype=complex)


def _lowest_root(kappa, U, n_brackets=1000):
    grid = np.concatenate(([1e-12], np.linspace(0.0, 1.0, n_brackets + 1)[1:]))
    values = dispersion(grid, kappa, U)
    for i, v in enumerate(values):
        if abs(v) < 1e-14:
            return float(grid[i])
        if i and np.sign(v) != np.sign(values[i - 1]):
            a, b = grid[i - 1], grid[i]
            try:
                return brentq(dispersion, a, b, args=(kappa, U), xtol=1e-16, rtol=1e-15, maxiter=200)
            except (ValueError, RuntimeError) as exc:
                raise RootFindError(f"brentq failed: {exc}", bracket=(a, b),
                                    values=(values[i - 1], v)) from exc
    raise RootFindError("no sign change of the dispersion relation in q in (0, 1]",
                        bracket=(grid[0], grid[-1]), values=(values[0], values[-1]))


@dataclass
class RingEigenstate:
    """Ground state on a periodic theta grid including both endpoints.

    ``phi`` is unit normalised (integral of |phi|^2 over a period is 1) with
    the global phase fixed so that phi(-pi) is real and positive.  Energies
    are in units of E_0, currents in units of r_S Omega_0.
    """

    theta_grid: np.ndarray
    phi: np.ndarray
    energy_E: float
    kappa: float
    U: float
    winding_n: int
    slope_s: float
    phase_drop_gamma: float
    current_J: float
    theta0: float
    q: float
    coeffs: tuple = field(repr=False)

    def __call__(self, theta):
        """Evaluate phi at arbitrary angles."""
        return _plane_wave(theta, self.kappa, self.q, *self.coeffs)

    def derivative(self, theta):
        return _plane_wave_derivative(theta, self.kappa, self.q, *self.coeffs)

    @property
    def density(self):
        return np.abs(self.phi) ** 2

    def unwrapped_phase(self):
        return unwrap_from_minus_pi(self.phi)

    def summary(self):
        return {
            "kappa": self.kappa, "U": self.U, "E": self.energy_E, "n": self.winding_n,
            "s": self.slope_s, "gamma": self.phase_drop_gamma, "J": self.current_J,
            "theta0": self.theta0, "q": self.q, "n_theta": int(self.theta_grid.size),
        }


def _cell(theta):
    return np.mod(np.asarray(theta, dtype=float), TWO_PI)


def _plane_wave(theta, kappa, q, A, B):
    t = _cell(theta)
    return np.exp(1j * kappa * t) * (A * np.exp(1j * q * t) + B * np.exp(-1j * q * t))


def _plane_wave_derivative(theta, kappa, q, A, B):
    t = _cell(theta)
    return np.exp(1j * kappa * t) * (1j * (kappa + q) * A * np.exp(1j * q * t)
                                     + 1j * (kappa - q) * B * np.exp(-1j * q * t))


def _cell_norm(q, A, B):
    if q > 0:
        cross = (np.exp(2j * TWO_PI * q) - 1) / (2j * q)
    else:
        cross = TWO_PI
    return math.sqrt(TWO_PI * (abs(A) ** 2 + abs(B) ** 2) + 2 * np.real(A * np.conj(B) * cross))


def ground_winding(kappa):
    """Integer closest to kappa; half-integers round up (gamma = +pi convention)."""
    return int(math.floor(kappa + 0.5))


def unwrap_from_minus_pi(phi):
    """Cumulative 2 pi-corrected phase starting from the first sample."""
    phase = np.unwrap(np.angle(phi))
    return phase - phase[0] + np.angle(phi[0])


def solve_ground_state(kappa: float, U: float, n_theta: int = 2048) -> RingEigenstate:
    if U < 0:
        raise ParameterError(f"barrier strength U must be >= 0, got {U}")
    if n_theta < 256:
        raise ParameterError(f"n_theta must be >= 256, got {n_theta}")
    kappa = float(kappa)
    U = float(U)
    n = ground_winding(kappa)

    if U == 0.0:
        q = abs(n - kappa)
        A, B = (1.0, 0.0) if n - kappa >= 0 else (0.0, 1.0)
    else:
        q = _lowest_root(kappa, U)
        M = matching_matrix(q, kappa, U)
        _, _, vh = np.linalg.svd(M)
        A, B = np.conj(vh[-1])

    norm = _cell_norm(q, A, B)
    A, B = A / norm, B / norm
    # Fix the global phase: phi(-pi) real positive.
    ref = _plane_wave(-math.pi, kappa, q, A, B)
    rot = np.conj(ref) / abs(ref)
    A, B = A * rot, B * rot

    theta = np.linspace(-math.pi, math.pi, n_theta)
    phi = _plane_wave(theta, kappa, q, A, B)
    dphi = _plane_wave_derivative(theta, kappa, q, A, B)
    energy = q * q - kappa * kappa

    phi_m = _plane_wave(-math.pi, kappa, q, A, B)
    dphi_m = _plane_wave_derivative(-math.pi, kappa, q, A, B)
    s = float(np.imag(dphi_m / phi_m))
    gamma = TWO_PI * (n - s)
    J = float(np.imag(np.conj(phi_m) * dphi_m) - kappa * abs(phi_m) ** 2)

    with np.errstate(divide="ignore", invalid="ignore"):
        grad = np.imag(dphi / phi)
    theta0 = _theta0(theta, grad, s)

    return RingEigenstate(theta_grid=theta, phi=phi, energy_E=float(energy), kappa=kappa,
                          U=U, winding_n=n, slope_s=s, phase_drop_gamma=float(gamma),
                          current_J=J, theta0=theta0, q=float(q), coeffs=(complex(A), complex(B)))


def _theta0(theta, grad, s):
    pos = (theta >= 0) & np.isfinite(grad)
    below = pos & (np.abs(grad) <= 2 * abs(s))
    if not below.any():
        return math.pi
    return float(theta[below][0])


def slope_and_phase_drop(state: RingEigenstate, density_threshold: float = 1e-8):
    """(s, gamma) from a centred finite difference of the unwrapped grid phase
    at theta = -pi.  The grid is periodic so the stencil wraps around."""
    phi = state.phi
    if abs(phi[0]) ** 2 < density_threshold:
        raise ParameterError("density at theta = -pi below threshold; phase unwrap is ambiguous")
    h = state.theta_grid[1] - state.theta_grid[0]
    # phi[-1] duplicates phi[0]; the left neighbour of -pi is phi[-2].
    step_fwd = np.angle(phi[1] / phi[0])
    step_bwd = np.angle(phi[0] / phi[-2])
    s = float((step_fwd + step_bwd) / (2 * h))
    return s, TWO_PI * (state.winding_n - s)


def winding_from_phase(state: RingEigenstate) -> int:
    phase = state.unwrapped_phase()
    return int(round((phase[-1] - phase[0]) / TWO_PI))


def current(state: RingEigenstate, theta) -> np.ndarray:
    """Angular current |phi|^2 (d arg phi / d theta - kappa) in units of r_S Omega_0."""
    phi = state(theta)
    dphi = state.derivative(theta)
    return np.imag(np.conj(phi) * dphi) - state.kappa * np.abs(phi) ** 2


def export_csv(state: RingEigenstate, path):
    phase = state.unwrapped_phase()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "density", "phase"])
        for th, d, ph in zip(state.theta_grid, state.density, phase):
            w.writerow([f"{th:.12g}", f"{d:.12g}", f"{ph:.12g}"])


def export_json(state: RingEigenstate, path):
    with open(path, "w") as fh:
        json.dump(state.summary(), fh, indent=2, sort_keys=True)
