"""Column density, imaging point-spread and absorption transmission."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import j1, jn_zeros

from .config import Grid2D
from .errors import ParameterError

AIRY_FIRST_ZERO = float(jn_zeros(1, 1)[0])  # 3.8317...
AIRY_THIRD_ZERO = float(jn_zeros(1, 3)[-1])  # 10.1735...


@dataclass
class DensityImage:
    """Real image on a Grid2D.

    Lengths in the grid are in units of ``length_unit_m`` metres (r_S for
    everything produced by the simulators) and ``time`` is in units of
    ``time_unit_s`` seconds.
    """

    grid: Grid2D
    values: np.ndarray
    kind: str = "density"
    time: float = 0.0
    psf_radius: float | None = None
    length_unit_m: float = 1.0
    time_unit_s: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("density", "transmission"):
            raise ParameterError(f"unknown image kind {self.kind!r}")

    @property
    def total(self):
        return float(np.sum(self.values) * self.grid.pixel_area)

    @property
    def time_s(self):
        return self.time * self.time_unit_s

    def with_values(self, values, **changes):
        return replace(self, values=values, **changes)


def column_density(field, length_unit_m: float = 1.0, time_unit_s: float = 1.0) -> DensityImage:
    """|amplitude|^2 per pixel.  Accepts a WaveField2D or anything with a
    ``.field`` attribute holding one (the mean-field state); the transverse
    Gaussian integrates to one in both models."""
    meta = {}
    wf = field
    if hasattr(field, "field"):
        wf = field.field
        meta["z_width"] = float(field.z_width)
        length_unit_m = getattr(field, "length_unit_m", length_unit_m)
        time_unit_s = getattr(field, "time_unit_s", time_unit_s)
    return DensityImage(grid=wf.grid, values=np.abs(wf.amplitude) ** 2, kind="density",
                        time=wf.time, length_unit_m=length_unit_m, time_unit_s=time_unit_s,
                        meta=meta)


def airy_intensity(rho, first_zero_radius):
    """Normalised-to-one-at-origin Airy pattern [2 J1(x) / x]^2."""
    x = AIRY_FIRST_ZERO * np.asarray(rho, dtype=float) / first_zero_radius
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 1e-12, (2 * j1(x) / np.where(x > 1e-12, x, 1.0)) ** 2, 1.0)
    return out


def airy_kernel(first_zero_radius: float, pitch: float):
    """Pixel-sampled Airy kernel truncated at its third dark ring, unit sum."""
    cut = first_zero_radius * AIRY_THIRD_ZERO / AIRY_FIRST_ZERO
    half = int(math.ceil(cut / pitch))
    ax = np.arange(-half, half + 1) * pitch
    X, Y = np.meshgrid(ax, ax, indexing="xy")
    rho = np.hypot(X, Y)
    k = np.where(rho <= cut, airy_intensity(rho, first_zero_radius), 0.0)
    return k / k.sum()


def convolve_airy(img: DensityImage, first_zero_radius: float) -> DensityImage:
    """Blur with the imaging point-spread function; ``first_zero_radius`` is
    in the image's length units."""
    pitch = img.grid.pixel_pitch
    if first_zero_radius < pitch * (1 - 1e-12):
        raise ParameterError(f"PSF first-zero radius {first_zero_radius:.4g} is below the "
                             f"pixel pitch {pitch:.4g}")
    kernel = airy_kernel(first_zero_radius, pitch)
    out = fftconvolve(img.values, kernel, mode="same")
    if img.kind == "density":
        out = np.clip(out, 0.0, None)
    else:
        out = np.clip(out, 0.0, 1.0)
    return img.with_values(out, psf_radius=first_zero_radius)


def airy_mtf(frequency, first_zero_radius, truncate=True, n=20001):
    """Modulation transfer of the (optionally truncated) Airy pattern at a
    spatial frequency (cycles per length), by radial quadrature of the
    Hankel transform."""
    from scipy.special import j0

    cut = first_zero_radius * (AIRY_THIRD_ZERO / AIRY_FIRST_ZERO if truncate else 60.0)
    rho = np.linspace(0.0, cut, n)
    w = airy_intensity(rho, first_zero_radius) * rho
    num = np.trapezoid(w * j0(2 * math.pi * frequency * rho), rho)
    return float(num / np.trapezoid(w, rho))


def transmission_map(img: DensityImage, cross_section: float) -> DensityImage:
    """Beer-Lambert transmission exp(-cross_section * n_column).

    ``cross_section`` is in m^2; the column density is converted from the
    image's length units."""
    if img.kind != "density":
        raise ParameterError("transmission_map needs a density image")
    if cross_section < 0:
        raise ParameterError("cross_section must be >= 0")
    n_si = img.values / img.length_unit_m ** 2
    T = np.clip(np.exp(-cross_section * n_si), 0.0, 1.0)
    return img.with_values(T, kind="transmission")
