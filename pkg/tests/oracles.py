"""Independent reference computations used only by the test-suite."""

import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh


def fd_ring_hamiltonian(kappa, U, n):
    """Periodic finite-difference -d2 + 2 i kappa d1 with the delta barrier
    lumped into the single cell at theta = 0 as U / h."""
    h = 2 * math.pi / n
    e = np.ones(n)
    d2 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], shape=(n, n), format="lil")
    d2[0, n - 1] = 1
    d2[n - 1, 0] = 1
    d1 = sp.diags([-e[:-1], e[:-1]], [-1, 1], shape=(n, n), format="lil")
    d1[0, n - 1] = -1
    d1[n - 1, 0] = 1
    H = -d2.tocsr() / h ** 2 + 2j * kappa * d1.tocsr() / (2 * h)
    j0 = n // 2  # theta_j = -pi + j h, so j = n/2 sits on the barrier
    H = H.tolil()
    H[j0, j0] += U / h
    return H.tocsc(), -math.pi + h * np.arange(n)


def fd_ground(kappa, U, n):
    H, theta = fd_ring_hamiltonian(kappa, U, n)
    vals, vecs = eigsh(H, k=1, sigma=-kappa ** 2 - 2.0, which="LM")
    vec = vecs[:, 0]
    vec = vec / math.sqrt(np.sum(np.abs(vec) ** 2) * (2 * math.pi / n))
    return float(vals[0]), theta, vec


def richardson_energy(kappa, U, n=2048):
    """Two-level Richardson extrapolation assuming E(h) = E + c h^2 + d h^4."""
    e1 = fd_ground(kappa, U, n)[0]
    e2 = fd_ground(kappa, U, 2 * n)[0]
    e3 = fd_ground(kappa, U, 4 * n)[0]
    r1 = (4 * e2 - e1) / 3
    r2 = (4 * e3 - e2) / 3
    return (16 * r2 - r1) / 15


def tf_ring_mu(p, ring_fraction):
    """3D Thomas-Fermi chemical potential (J) of a thin torus with harmonic
    radial and transverse confinement: N_ring = 2 pi^2 r_S mu^2 / (g m w_r w_z)."""
    N = ring_fraction * p.N_atoms
    return math.sqrt(N * p.g3d * p.atom_mass * p.omega_r * p.omega_z / (2 * math.pi ** 2 * p.r_S))


def lda_notch_ratio(trap, mu2d, n_r=4000):
    """rho(0) / rho(pi) from the local-density profile max(mu2d - V, 0)
    integrated over the ring cross-section, with V = ring + barrier potential."""
    r = np.linspace(trap.r_split, 2.0, n_r)

    def rho(theta):
        V = trap.ring_potential(r) + trap.barrier_potential(r, np.full_like(r, theta))
        return np.trapezoid(np.clip(mu2d - V, 0.0, None) * r, r)

    return float(rho(0.0) / rho(math.pi))


def fd_current(theta, rho, zeta, kappa):
    """rho (dzeta/dtheta - kappa) by centred differences at interior points."""
    dz = np.gradient(zeta, theta)
    return rho[1:-1] * (dz[1:-1] - kappa)
