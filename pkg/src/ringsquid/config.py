"""Physical parameter sets, unit conversion and grid construction.

Everything downstream of this module works in internal units with
hbar = m = r_S = 1.  In these units the natural energy of the ring is
E_0 = 1/2, the rotation unit Omega_0 = 2 E_0 / hbar = 1 and the time unit is
m r_S^2 / hbar.  Conversions to and from SI live here and nowhere else.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.constants import atomic_mass, hbar

from .errors import ConfigError, ParameterError

SODIUM_23_MASS = 22.98976928 * atomic_mass


@dataclass(frozen=True)
class TargetTrapParams:
    """Target trap (science ring + reference disc) in SI units.

    ``barrier_strength_U0`` (J rad) is the delta-barrier strength of the
    single-particle model; ``barrier_height`` (J) and ``barrier_width``
    (m, 1/e^2 full width) describe the Gaussian barrier of the mean-field
    model.
    """

    atom_mass: float = SODIUM_23_MASS
    r_S: float = 22.4e-6
    sigma_S: float | None = None
    sigma_R: float | None = None
    ell_z: float | None = None
    omega_r: float = 2 * math.pi * 240.0
    omega_z: float = 2 * math.pi * 600.0
    barrier_strength_U0: float = 0.0
    barrier_height: float = 0.0
    barrier_width: float = 6e-6
    Omega: float = 0.0
    N_atoms: float = 7e5
    scattering_length_a: float = 2.8e-9
    disc_fraction: float = 0.25
    disc_radius: float = 5e-6
    disc_profile: str = "flat"
    disc_order: int = 8
    disc_omega: float | None = None

    def __post_init__(self):
        # Oscillator lengths default to the harmonic values of the trap.
        if self.sigma_S is None:
            object.__setattr__(self, "sigma_S", _osc_length(self.atom_mass, self.omega_r))
        if self.sigma_R is None:
            object.__setattr__(self, "sigma_R", self.sigma_S)
        if self.ell_z is None:
            object.__setattr__(self, "ell_z", _osc_length(self.atom_mass, self.omega_z))
        if self.disc_omega is None:
            object.__setattr__(self, "disc_omega", self.omega_r)
        self.validate()

    def validate(self):
        if not self.atom_mass > 0:
            raise ParameterError(f"atom_mass must be positive, got {self.atom_mass}")
        if not self.r_S > 0:
            raise ParameterError(f"r_S must be positive, got {self.r_S}")
        for name in ("sigma_S", "sigma_R", "ell_z", "omega_r", "omega_z", "barrier_width"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.N_atoms < 1:
            raise ParameterError(f"N_atoms must be >= 1, got {self.N_atoms}")
        if not 0.0 <= self.disc_fraction <= 1.0:
            raise ParameterError(f"disc_fraction must lie in [0, 1], got {self.disc_fraction}")
        if self.scattering_length_a < 0:
            raise ParameterError("scattering_length_a must be >= 0")
        if self.barrier_height < 0 or self.barrier_strength_U0 < 0:
            raise ParameterError("barrier strengths must be >= 0")
        if self.disc_profile not in ("harmonic", "flat"):
            raise ParameterError(f"disc_profile must be 'harmonic' or 'flat', got {self.disc_profile!r}")
        for name in ("sigma_S", "sigma_R", "ell_z"):
            if getattr(self, name) > 0.2 * self.r_S:
                warnings.warn(f"{name} = {getattr(self, name):.3g} m exceeds 0.2 r_S; "
                              "thin-ring assumptions are strained", stacklevel=3)

    # derived scales
    @property
    def E0(self):
        return hbar ** 2 / (2 * self.atom_mass * self.r_S ** 2)

    @property
    def Omega0(self):
        return 2 * self.E0 / hbar

    @property
    def time_unit(self):
        return self.atom_mass * self.r_S ** 2 / hbar

    @property
    def kappa(self):
        return self.Omega / self.Omega0

    @property
    def g3d(self):
        return 4 * math.pi * hbar ** 2 * self.scattering_length_a / self.atom_mass

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_kappa(self, kappa):
        return self.replace(Omega=kappa * self.Omega0)

    def params_hash(self):
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _osc_length(mass, omega):
    return math.sqrt(hbar / (mass * omega))


@dataclass(frozen=True)
class DimensionlessParams:
    kappa: float
    U: float
    sigma_S_hat: float
    sigma_R_hat: float
    energy_unit_E0: float
    freq_unit_Omega0: float
    time_unit: float
    length_unit: float
    mass: float

    def to_seconds(self, t):
        return t * self.time_unit

    def from_seconds(self, t_s):
        return t_s / self.time_unit


def to_dimensionless(p: TargetTrapParams) -> DimensionlessParams:
    if not (p.atom_mass > 0 and p.r_S > 0):
        raise ParameterError("mass and ring radius must be positive")
    E0 = p.E0
    return DimensionlessParams(
        kappa=p.Omega / p.Omega0,
        U=p.barrier_strength_U0 / E0,
        sigma_S_hat=p.sigma_S / p.r_S,
        sigma_R_hat=p.sigma_R / p.r_S,
        energy_unit_E0=E0,
        freq_unit_Omega0=p.Omega0,
        time_unit=p.time_unit,
        length_unit=p.r_S,
        mass=p.atom_mass,
    )


def to_physical(d: DimensionlessParams, template: TargetTrapParams | None = None) -> TargetTrapParams:
    """Inverse of :func:`to_dimensionless`; fields without a dimensionless
    counterpart are taken from ``template``."""
    template = template or TargetTrapParams()
    return template.replace(
        atom_mass=d.mass,
        r_S=d.length_unit,
        sigma_S=d.sigma_S_hat * d.length_unit,
        sigma_R=d.sigma_R_hat * d.length_unit,
        Omega=d.kappa * d.freq_unit_Omega0,
        barrier_strength_U0=d.U * d.energy_unit_E0,
    )


@dataclass(frozen=True)
class Grid2D:
    """Square-pixel Cartesian grid centred on the ring axis.

    Pixel centres sit at (j - (n-1)/2) * pitch so the grid is symmetric
    under x -> -x and under 90 degree rotations; no pixel lands on r = 0.
    """

    nx: int
    ny: int
    extent: float

    @property
    def pixel_pitch(self):
        return self.extent / self.nx

    @property
    def extent_y(self):
        return self.pixel_pitch * self.ny

    @property
    def pixel_area(self):
        return self.pixel_pitch ** 2

    @property
    def half_extent(self):
        return 0.5 * min(self.extent, self.extent_y)

    @property
    def x(self):
        return (np.arange(self.nx) - (self.nx - 1) / 2) * self.pixel_pitch

    @property
    def y(self):
        return (np.arange(self.ny) - (self.ny - 1) / 2) * self.pixel_pitch

    def mesh(self):
        """(X, Y) arrays indexed [iy, ix]."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    def polar(self):
        X, Y = self.mesh()
        return np.hypot(X, Y), np.arctan2(Y, X)

    def wavenumbers(self):
        kx = 2 * np.pi * np.fft.fftfreq(self.nx, d=self.pixel_pitch)
        ky = 2 * np.pi * np.fft.fftfreq(self.ny, d=self.pixel_pitch)
        return np.meshgrid(kx, ky, indexing="xy")

    def k_squared(self):
        KX, KY = self.wavenumbers()
        return KX ** 2 + KY ** 2

    def scaled(self, factor):
        return Grid2D(self.nx, self.ny, self.extent * factor)

    def to_dict(self):
        return {"nx": self.nx, "ny": self.ny, "extent": self.extent}


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def make_grid(extent: float, nx: int, ny: int | None = None) -> Grid2D:
    ny = nx if ny is None else ny
    for name, n in (("nx", nx), ("ny", ny)):
        if int(n) != n or n < 64 or not _is_pow2(int(n)):
            raise ParameterError(
                f"{name}={n} rejected: grid sizes must be powers of two >= 64 "
                f"(try {max(64, 1 << max(0, int(n) - 1).bit_length())})")
    if not extent > 0:
        raise ParameterError(f"grid extent must be positive, got {extent}")
    return Grid2D(int(nx), int(ny), float(extent))


# ---------------------------------------------------------------------------
# Config files: flat "key = value" lines, the unit is the key suffix.

_UM = 1e-6
_TWO_PI = 2 * math.pi

# key -> (target, attribute, scale).  target "trap" feeds TargetTrapParams,
# "run" feeds RunSettings.
CONFIG_SCHEMA = {
    "atom_mass_amu": ("trap", "atom_mass", atomic_mass),
    "r_S_um": ("trap", "r_S", _UM),
    "sigma_S_um": ("trap", "sigma_S", _UM),
    "sigma_R_um": ("trap", "sigma_R", _UM),
    "ell_z_um": ("trap", "ell_z", _UM),
    "omega_r_Hz": ("trap", "omega_r", _TWO_PI),
    "omega_z_Hz": ("trap", "omega_z", _TWO_PI),
    "barrier_U": ("run", "U", 1.0),
    "barrier_height_Hz": ("trap", "barrier_height", _TWO_PI * hbar),
    "barrier_width_um": ("trap", "barrier_width", _UM),
    "Omega_Hz": ("trap", "Omega", _TWO_PI),
    "kappa": ("run", "kappa", 1.0),
    "N_atoms": ("trap", "N_atoms", 1.0),
    "scattering_length_nm": ("trap", "scattering_length_a", 1e-9),
    "disc_fraction": ("trap", "disc_fraction", 1.0),
    "disc_radius_um": ("trap", "disc_radius", _UM),
    "disc_profile": ("trap", "disc_profile", str),
    "disc_order": ("trap", "disc_order", int),
    "disc_omega_Hz": ("trap", "disc_omega", _TWO_PI),
    "winding_n": ("run", "winding_n", int),
    "phase_offset_rad": ("run", "phase_offset", 1.0),
    "grid_n": ("run", "grid_n", int),
    "grid_extent_um": ("run", "grid_extent", _UM),
    "psf_first_zero_um": ("run", "psf_first_zero", _UM),
    "cross_section_um2": ("run", "cross_section", _UM ** 2),
    "expansion_times_ms": ("run", "expansion_times", 1e-3),
    "dt_us": ("run", "dt", 1e-6),
    "ground_tol": ("run", "ground_tol", 1.0),
    "seed": ("run", "seed", int),
    "randomize_phase": ("run", "randomize_phase", bool),
}


@dataclass
class RunSettings:
    """Numerical and instrument knobs that are not properties of the trap."""

    kappa: float | None = None
    U: float | None = None
    winding_n: int | None = None
    phase_offset: float = 0.0
    grid_n: int = 512
    grid_extent: float = 134.4e-6
    psf_first_zero: float = 2e-6
    # Resonant D2 cross-section scale 3 lambda^2 / (2 pi), lambda = 589 nm.
    cross_section: float = 1.657e-13
    expansion_times: tuple = (17e-3,)
    dt: float = 1.8e-6
    ground_tol: float = 1e-5
    seed: int = 0
    randomize_phase: bool = False


@dataclass
class Config:
    trap: TargetTrapParams = field(default_factory=TargetTrapParams)
    run: RunSettings = field(default_factory=RunSettings)
    source: dict = field(default_factory=dict)

    def effective(self):
        """Flat dict of every setting, suitable for manifests."""
        out = {"trap": {k: v for k, v in dataclasses.asdict(self.trap).items()},
               "run": dataclasses.asdict(self.run)}
        out["run"]["expansion_times"] = list(self.run.expansion_times)
        return out


def _convert(key, raw, scale, lineno, path):
    if scale is str:
        return raw.strip().strip('"').strip("'")
    if scale is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}", lineno, path)
    try:
        if scale is int:
            return int(raw)
        if "," in raw:
            return tuple(float(v) * scale for v in raw.split(",") if v.strip())
        return float(raw) * scale
    except ValueError:
        raise ConfigError(f"{key}: cannot parse value {raw!r}", lineno, path) from None


def parse_config_text(text: str, path=None, overrides: dict | None = None) -> Config:
    """Parse the flat key/value format.  ``overrides`` maps config keys to
    raw string values and wins over the file (CLI flags)."""
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno, path)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", lineno, path)
        entries[key] = (raw, lineno)
    for key, raw in (overrides or {}).items():
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown override key {key!r}")
        entries[key] = (str(raw), None)

    trap_kw, run_kw = {}, {}
    for key, (raw, lineno) in entries.items():
        target, attr, scale = CONFIG_SCHEMA[key]
        value = _convert(key, raw, scale, lineno, path)
        if attr == "expansion_times" and not isinstance(value, tuple):
            value = (value,)
        (trap_kw if target == "trap" else run_kw)[attr] = value
    try:
        trap = TargetTrapParams(**trap_kw)
        run = RunSettings(**run_kw)
        if run.kappa is not None:
            trap = trap.with_kappa(run.kappa)
        if run.U is not None:
            trap = trap.replace(barrier_strength_U0=run.U * trap.E0)
    except ConfigError:
        raise
    except ParameterError as exc:
        raise ConfigError(str(exc), path=path) from exc
    return Config(trap=trap, run=run, source={k: v[0] for k, v in entries.items()})


def load_config(path, overrides=None) -> Config:
    path = Path(path)
    return parse_config_text(path.read_text(), path=str(path), overrides=overrides)


DEFAULT_CONFIG_TEXT = """\
# Sodium target trap: 22.4 um ring, 240 Hz radial, 600 Hz transverse.
atom_mass_amu = 22.98976928
r_S_um = 22.4
omega_r_Hz = 240
omega_z_Hz = 600
N_atoms = 7e5
scattering_length_nm = 2.8
disc_fraction = 0.25
disc_radius_um = 5.0
disc_profile = flat
barrier_width_um = 6.0
barrier_height_Hz = 0
kappa = 0
grid_n = 512
grid_extent_um = 134.4
dt_us = 1.8
psf_first_zero_um = 2.0
expansion_times_ms = 17
"""
