import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringsquid.config import (CONFIG_SCHEMA, DEFAULT_CONFIG_TEXT, SODIUM_23_MASS, Grid2D,
                              TargetTrapParams, load_config, make_grid, parse_config_text,
                              to_dimensionless, to_physical)
from ringsquid.errors import ConfigError, ParameterError

# hbar / (2 m r_S^2) and m r_S^2 / hbar for sodium-23 at r_S = 22.4 um, computed
# by hand from CODATA constants and frozen here.
E0_OVER_HBAR_HZ = 0.43812  # E_0 / (2 pi hbar) = 1 / (4 pi time unit)
TIME_UNIT_S = 0.181637


def test_sodium_units():
    p = TargetTrapParams()
    d = to_dimensionless(p)
    assert d.time_unit == pytest.approx(TIME_UNIT_S, rel=1e-4)
    assert d.energy_unit_E0 / (2 * math.pi * 1.054571817e-34) == pytest.approx(E0_OVER_HBAR_HZ,
                                                                                rel=1e-4)
    # Omega_0 = 2 E_0 / hbar is one over the time unit
    assert d.freq_unit_Omega0 * d.time_unit == pytest.approx(1.0, rel=1e-12)


def test_default_widths_are_oscillator_lengths():
    p = TargetTrapParams()
    d = to_dimensionless(p)
    # sqrt(hbar / (m omega_r)) / r_S, equivalently 1 / sqrt(omega_r in internal units)
    assert d.sigma_S_hat == pytest.approx(1 / math.sqrt(p.omega_r * p.time_unit), rel=1e-12)
    assert d.sigma_S_hat == pytest.approx(0.0604, abs=5e-4)
    assert d.sigma_R_hat == d.sigma_S_hat


@pytest.mark.parametrize("extent, nx, pitch", [(5.12, 512, 0.01), (12.8, 512, 0.025)])
def test_grid_pitch(extent, nx, pitch):
    g = make_grid(extent, nx)
    assert g.pixel_pitch == pytest.approx(pitch, rel=1e-12)


def test_trivial_dimensionless_cases():
    p = TargetTrapParams()
    assert to_dimensionless(p.replace(Omega=0.0)).kappa == 0.0
    assert to_dimensionless(p.replace(barrier_strength_U0=p.E0)).U == pytest.approx(1.0)


def test_grid_is_symmetric():
    g = make_grid(4.0, 64)
    assert g.x[0] == pytest.approx(-g.x[-1])
    assert 0.0 not in g.x
    R, _ = g.polar()
    assert R.min() > 0


@pytest.mark.parametrize("n", [2, 100, 32, 513])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ParameterError, match="powers of two"):
        make_grid(4.0, n)


def test_grid_rejects_nonpositive_extent():
    with pytest.raises(ParameterError):
        make_grid(0.0, 64)


@given(kappa=st.floats(-2, 2), U=st.floats(0, 5), sigma=st.floats(0.01, 0.1))
@settings(max_examples=40, deadline=None)
def test_dimensionless_round_trip(kappa, U, sigma):
    p = TargetTrapParams(sigma_S=sigma * 22.4e-6, sigma_R=0.5 * sigma * 22.4e-6)
    d = to_dimensionless(p.with_kappa(kappa).replace(barrier_strength_U0=U * p.E0))
    back = to_dimensionless(to_physical(d, p))
    assert back.kappa == pytest.approx(kappa, abs=1e-12)
    assert back.U == pytest.approx(U, abs=1e-12)
    assert back.sigma_S_hat == pytest.approx(sigma, rel=1e-12)


def test_params_validation():
    with pytest.raises(ParameterError):
        TargetTrapParams(r_S=-1.0)
    with pytest.raises(ParameterError):
        TargetTrapParams(disc_fraction=1.5)
    with pytest.raises(ParameterError):
        TargetTrapParams(disc_profile="gaussian")
    with pytest.warns(UserWarning, match="thin-ring"):
        TargetTrapParams(sigma_S=6e-6)


def test_params_hash_stable_and_sensitive():
    p = TargetTrapParams()
    assert p.params_hash() == TargetTrapParams().params_hash()
    assert p.params_hash() != p.replace(N_atoms=6e5).params_hash()


def test_default_config_matches_dataclass_defaults():
    cfg = parse_config_text(DEFAULT_CONFIG_TEXT)
    p = TargetTrapParams()
    assert cfg.trap.atom_mass == pytest.approx(SODIUM_23_MASS, rel=1e-9)
    for name in ("r_S", "omega_r", "omega_z", "N_atoms", "scattering_length_a", "disc_radius"):
        assert getattr(cfg.trap, name) == pytest.approx(getattr(p, name), rel=1e-12)
    assert cfg.run.expansion_times == pytest.approx((17e-3,))


def test_config_units_and_overrides():
    text = "r_S_um = 20\nomega_r_Hz = 100\nexpansion_times_ms = 10, 15\nkappa = 0.3\nbarrier_U = 2\n"
    cfg = parse_config_text(text, overrides={"omega_r_Hz": "200"})
    assert cfg.trap.r_S == pytest.approx(20e-6)
    assert cfg.trap.omega_r == pytest.approx(2 * math.pi * 200)
    assert cfg.run.expansion_times == pytest.approx((10e-3, 15e-3))
    d = to_dimensionless(cfg.trap)
    assert d.kappa == pytest.approx(0.3)
    assert d.U == pytest.approx(2.0)
    assert cfg.effective()["run"]["expansion_times"] == pytest.approx([10e-3, 15e-3])


@pytest.mark.parametrize("text, lineno, fragment", [
    ("r_S_um = 22\nbogus = 1\n", 2, "unknown key"),
    ("r_S_um = 22\n\nr_S_um = 23\n", 3, "duplicate"),
    ("omega_r_Hz\n", 1, "key = value"),
    ("omega_r_Hz = fast\n", 1, "cannot parse"),
    ("randomize_phase = maybe\n", 1, "boolean"),
])
def test_config_errors_carry_line_numbers(text, lineno, fragment):
    with pytest.raises(ConfigError, match=fragment) as info:
        parse_config_text(text, path="trap.cfg")
    assert info.value.lineno == lineno
    assert f"trap.cfg:{lineno}:" in str(info.value)


def test_config_physical_validation_is_a_config_error():
    with pytest.raises(ConfigError, match="r_S must be positive"):
        parse_config_text("r_S_um = -3\n")


def test_load_config_file(tmp_path):
    path = tmp_path / "trap.cfg"
    path.write_text("# comment\nN_atoms = 5e5  # fewer atoms\nseed = 7\nrandomize_phase = yes\n")
    cfg = load_config(path)
    assert cfg.trap.N_atoms == 5e5
    assert cfg.run.seed == 7 and cfg.run.randomize_phase
    assert cfg.source["N_atoms"] == "5e5"


def test_schema_keys_carry_units():
    for key, (target, _, scale) in CONFIG_SCHEMA.items():
        assert target in ("trap", "run")
        if scale not in (str, int, bool, 1.0):
            assert "_" in key


def test_grid_dict_round_trip():
    g = make_grid(6.0, 128)
    assert Grid2D(**g.to_dict()) == g
