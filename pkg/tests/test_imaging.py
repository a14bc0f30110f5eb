import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringsquid.config import make_grid
from ringsquid.errors import ParameterError
from ringsquid.expansion import WaveField2D
from ringsquid.imaging import (DensityImage, airy_intensity, airy_kernel, airy_mtf, column_density,
                               convolve_airy, transmission_map)


def _stripes(grid, period, contrast=0.5):
    X, _ = grid.mesh()
    return DensityImage(grid, 1.0 + contrast * np.cos(2 * math.pi * X / period))


@pytest.mark.parametrize("period_over_psf", [1.5, 2.0, 4.0])
def test_blur_of_stripes_matches_mtf(period_over_psf):
    grid = make_grid(4.0, 512)
    psf = 0.1
    period = period_over_psf * psf
    # a whole number of periods across the box keeps the stripes periodic
    period = grid.extent / round(grid.extent / period)
    img = _stripes(grid, period)
    out = convolve_airy(img, psf)
    centre = out.values[192:320, 192:320]
    X, _ = grid.mesh()
    basis = np.cos(2 * math.pi * X / period)[192:320, 192:320]
    amp = np.sum((centre - centre.mean()) * basis) / np.sum(basis ** 2)
    assert amp / 0.5 == pytest.approx(airy_mtf(1 / period, psf), rel=0.05)


def test_mtf_limits():
    assert airy_mtf(0.0, 1.0) == pytest.approx(1.0)
    # the diffraction cutoff of a circular pupil sits at 1.22 / first-zero radius
    assert abs(airy_mtf(1.3 / 1.0, 1.0, truncate=False)) < 0.02


def test_kernel_is_normalised_and_isotropic():
    k = airy_kernel(0.1, 0.01)
    assert k.sum() == pytest.approx(1.0)
    assert np.allclose(k, k.T)
    assert np.allclose(k, k[::-1, ::-1])
    c = k.shape[0] // 2
    assert k[c, c] == k.max()


def test_airy_intensity_zero_and_peak():
    assert airy_intensity(0.0, 1.0) == pytest.approx(1.0)
    assert airy_intensity(1.0, 1.0) < 1e-20


@given(seed=st.integers(0, 2 ** 16))
@settings(max_examples=10, deadline=None)
def test_blur_conserves_total(seed):
    grid = make_grid(4.0, 128)
    rng = np.random.default_rng(seed)
    values = np.zeros((128, 128))
    values[40:88, 40:88] = rng.random((48, 48))
    img = DensityImage(grid, values)
    assert convolve_airy(img, 0.1).total == pytest.approx(img.total, rel=1e-10)


def test_psf_below_pitch_is_rejected():
    img = _stripes(make_grid(4.0, 64), 1.0)
    with pytest.raises(ParameterError, match="below the pixel pitch"):
        convolve_airy(img, 0.5 * img.grid.pixel_pitch)


def test_transmission_is_beer_lambert():
    grid = make_grid(2.0, 64)
    n = np.full((64, 64), 3.0)
    img = DensityImage(grid, n, length_unit_m=1e-6)
    T = transmission_map(img, 1e-13)
    # 3 per (1 um)^2 is 3e12 m^-2, so the optical depth is 0.3
    assert T.kind == "transmission"
    assert np.allclose(T.values, math.exp(-0.3))
    with pytest.raises(ParameterError):
        transmission_map(T, 1e-13)
    with pytest.raises(ParameterError):
        transmission_map(img, -1.0)


def test_column_density_integrates_to_norm():
    grid = make_grid(4.0, 128)
    R, _ = grid.polar()
    amp = np.exp(-R ** 2 / 0.5) * np.exp(1j * R)
    field = WaveField2D(grid, amp, 0.3)
    img = column_density(field, length_unit_m=2e-5, time_unit_s=0.1)
    assert img.total == pytest.approx(field.norm, rel=1e-12)
    assert img.time_s == pytest.approx(0.03)
    assert np.all(img.values >= 0)


def test_unknown_kind_is_rejected():
    with pytest.raises(ParameterError):
        DensityImage(make_grid(2.0, 64), np.zeros((64, 64)), kind="phase")


def test_point_like_psf_and_flat_image():
    grid = make_grid(4.0, 256)
    R, _ = grid.polar()
    img = DensityImage(grid, np.exp(-R ** 2 / 0.5))
    out = convolve_airy(img, grid.pixel_pitch)
    assert np.max(np.abs(out.values - img.values)) < 0.01 * img.values.max()
    flat = DensityImage(grid, np.ones((256, 256)))
    inner = convolve_airy(flat, 0.1).values[32:-32, 32:-32]
    assert np.allclose(inner, 1.0, atol=1e-12)


def test_transmission_trivial_cases():
    grid = make_grid(2.0, 64)
    assert np.all(transmission_map(DensityImage(grid, np.zeros((64, 64))), 1e-13).values == 1.0)
    n = np.full((64, 64), math.log(2) / 1e-13)
    assert np.allclose(transmission_map(DensityImage(grid, n), 1e-13).values, 0.5)
