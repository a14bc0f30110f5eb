import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringsquid import fringes
from ringsquid.config import make_grid
from ringsquid.errors import AnalysisError
from ringsquid.expansion import build_initial_superposition, propagate_free_fft, timescales
from ringsquid.imaging import DensityImage, column_density
from ringsquid.ring import solve_ground_state

TWO_PI = 2 * math.pi
GRID = make_grid(8.0, 256)


def spiral(n=1, k=12.0):
    """Synthetic fringes with maxima on r = (n theta + 2 pi m) / k."""
    R, TH = GRID.polar()
    return DensityImage(GRID, 1 + 0.8 * np.cos(k * R - n * TH))


@given(k=st.floats(8.0, 40.0), phase=st.floats(-math.pi, math.pi))
@settings(max_examples=30, deadline=None)
def test_pure_cosine_wavenumber(k, phase):
    r = np.linspace(0.5, 2.5, 800)
    y = 2.0 + 0.3 * r + np.cos(k * r + phase)
    fit = fringes.fit_radial_cosine(r, y)
    assert fit.k == pytest.approx(k, rel=1e-6)


def test_harmonic_fit_separates_components():
    r = np.linspace(0.5, 2.5, 1200)
    y = 1.0 + 0.3 * np.cos(10.0 * r) + 0.8 * np.cos(21.0 * r + 0.4)
    fit = fringes.fit_radial_cosine(r, y, harmonic=True)
    assert fit.k == pytest.approx(10.0, rel=1e-4)
    assert fit.k2 == pytest.approx(21.0, rel=1e-4)


@pytest.mark.parametrize("n", [-1, 0, 1])
def test_synthetic_winding(n):
    img = spiral(n=n)
    assert fringes.extract_winding(img, delta=TWO_PI / 12.0, r_window=(0.6, 2.4)) == n


def test_synthetic_spacing():
    d, err = fringes.mean_fringe_spacing(spiral(), (0.6, 2.4), [2.0, 3.0, 4.0])
    assert d == pytest.approx(TWO_PI / 12.0, rel=1e-3)
    assert err < 1e-3


def test_too_few_fringes_is_an_analysis_error():
    with pytest.raises(AnalysisError, match="fringes in the radial window"):
        fringes.radial_fringe_spacing(spiral(k=4.0), math.pi, (1.0, 2.0))


def test_bad_window_is_an_analysis_error():
    with pytest.raises(AnalysisError, match="bad radial window"):
        fringes.radial_fringe_spacing(spiral(), math.pi, (2.0, 1.0))


def _expanded(kappa, U, fraction=0.25):
    ring = solve_ground_state(kappa, U)
    psi = build_initial_superposition((0.025, 0.05), ring, make_grid(8.0, 512))
    t = fraction * timescales(0.05, 1.0).tau_C
    return ring, t, column_density(propagate_free_fft(psi, t))


@pytest.mark.parametrize("kappa, n", [(0.8, 1), (-0.8, -1)])
def test_winding_sign_follows_rotation(kappa, n):
    ring, t, img = _expanded(kappa, 0.5)
    assert ring.winding_n == n
    assert fringes.extract_winding(img, delta=TWO_PI * t, r_window=(0.5, 2.0)) == n


def test_half_flux_state_gives_half_fringe_jump():
    ring, t, img = _expanded(0.5, 1.0)
    rep = fringes.analyze_image(img, (0.5, 2.0), kappa=0.5,
                                density_at_antibarrier=float(np.abs(ring(math.pi)) ** 2))
    assert rep.delta == pytest.approx(TWO_PI * t, rel=0.05)
    # the density node leaves no fringes in the wedge, so n = 1 with Delta / delta
    # = 0.5 and n = 0 with -0.5 are the same state; only |gamma| = pi is fixed
    assert abs(rep.ratio) == pytest.approx(0.5, abs=0.05)
    assert abs(fringes.wrap(rep.gamma - math.pi)) < 0.05 * TWO_PI


def test_phase_drop_and_current_formulas():
    assert fringes.phase_drop_from_ratio(1, 0.5) == pytest.approx(math.pi)
    assert fringes.phase_drop_from_ratio(0, -0.25) == pytest.approx(math.pi / 2)
    assert fringes.current_from_fringes(0.3, 0.1, 0.2) == pytest.approx(0.04)


def test_report_row_and_csv(tmp_path):
    rep = fringes.FringeReport(delta=0.3, delta_err=0.01, Delta=0.1, Delta_err=0.01, ratio=1 / 3,
                               ratio_err=0.03, winding_n=0, gamma=-2.1, gamma_err=0.2, J=None,
                               fit_windows={"r_lo": 0.5, "r_hi": 2.0}, regime_flags={"ok": True})
    row = rep.as_row(file="a.pgm")
    assert list(row)[0] == "file"
    assert row["fit_windows"] == "r_lo=0.5;r_hi=2.0"
    path = tmp_path / "r.csv"
    fringes.write_report_csv([row, {"file": "b.pgm", "error": "failed"}], path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("file,delta") and lines[0].endswith(",error")
    assert len(lines) == 3
    with pytest.raises(AnalysisError):
        fringes.write_report_csv([], path)


def test_spacing_law_arithmetic(sodium):
    from scipy.constants import hbar
    # internal units: delta = 2 pi t r_S
    assert TWO_PI * 0.125 == pytest.approx(0.785, rel=2e-3)
    delta = TWO_PI * hbar * 17e-3 / (sodium.atom_mass * sodium.r_S)
    assert delta == pytest.approx(13.2e-6, rel=0.01)


def test_single_particle_spacing_at_one_eighth():
    ring = solve_ground_state(0.0, 0.0)
    psi = build_initial_superposition((0.05, 0.05), ring, make_grid(16.0, 1024))
    t = 0.125
    img = column_density(propagate_free_fft(psi, t))
    d, _ = fringes.mean_fringe_spacing(img, (0.8, 1 + 2 * t / 0.05), [0.0, 1.0, 2.0, 3.0],
                                       k0=1 / t, harmonic=True)
    assert d == pytest.approx(0.785, rel=0.02)


def test_no_rotation_gives_no_jump():
    ring, t, img = _expanded(0.0, 0.0)
    jump = fringes.extract_jump(img, delta=TWO_PI * t, r_window=(0.5, 2.0), winding_n=0)
    assert abs(jump.Delta) <= max(3 * jump.Delta_err, 1e-3 * TWO_PI * t)


def test_trivial_phase_drop_and_current_cases():
    assert fringes.phase_drop_from_ratio(0, 0.0) == 0.0
    assert fringes.current_from_fringes(0.37, 0.37, 0.2) == 0.0
    assert fringes.current_from_fringes(0.0, 0.3, 1 / TWO_PI) == pytest.approx(-0.3 / TWO_PI)
