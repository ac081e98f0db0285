import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from squeezegate.chain import (
    ELEVEN_ION_TABLE_MHZ,
    ModeData,
    TrapConfig,
    coulomb_coupling,
    equilibrium_positions,
    radial_modes,
    tabulated_modes,
)
from squeezegate.errors import ChainUnstable, InputError


def test_two_ion_positions_closed_form():
    # u = +-(1/4)^(1/3) in Coulomb length units
    u = equilibrium_positions(2)
    np.testing.assert_allclose(u, [-(0.25 ** (1 / 3)), 0.25 ** (1 / 3)], atol=1e-12)


def test_three_ion_positions_closed_form():
    # u = 0, +-(5/4)^(1/3)
    u = equilibrium_positions(3)
    np.testing.assert_allclose(u, [-(1.25 ** (1 / 3)), 0.0, 1.25 ** (1 / 3)], atol=1e-12)


def test_single_ion():
    md = radial_modes(TrapConfig(1, 0.5, 3.0, 0.1))
    np.testing.assert_allclose(md.frequencies, [3.0])
    np.testing.assert_allclose(md.lamb_dicke, [[0.1]])


def test_two_ion_radial_modes_closed_form():
    # COM at omega_r, tilt at sqrt(omega_r^2 - omega_z^2)
    wz, wr = 0.5, 3.0
    md = radial_modes(TrapConfig(2, wz, wr, 0.1))
    np.testing.assert_allclose(md.frequencies, [wr, np.sqrt(wr**2 - wz**2)], atol=1e-12)


def test_eleven_ion_spectrum_is_ordered_and_orthonormal():
    md = radial_modes(TrapConfig(11, 0.39, 3.0, 0.1))
    assert md.frequencies[0] == pytest.approx(3.0, abs=1e-9)
    assert np.all(np.diff(md.frequencies) < 0)
    np.testing.assert_allclose(md.eigenvectors.T @ md.eigenvectors, np.eye(11), atol=1e-10)


def test_com_mode_has_uniform_participation():
    md = radial_modes(TrapConfig(7, 0.3, 3.0, 0.1))
    np.testing.assert_allclose(np.abs(md.eigenvectors[:, 0]), 1 / np.sqrt(7), atol=1e-10)


def test_unstable_chain_raises():
    with pytest.raises(ChainUnstable):
        radial_modes(TrapConfig(30, 0.39, 3.0, 0.1))


@pytest.mark.parametrize("bad", [dict(num_ions=0), dict(axial_freq=-1.0), dict(radial_freq=0.1),
                                 dict(base_lamb_dicke=0.0)])
def test_trap_validation(bad):
    args = dict(num_ions=3, axial_freq=0.5, radial_freq=3.0, base_lamb_dicke=0.1)
    args.update(bad)
    with pytest.raises(InputError):
        TrapConfig(**args)


def test_mode_data_roundtrip(tmp_path):
    md = radial_modes(TrapConfig(5, 0.6, 3.0, 0.1))
    path = tmp_path / "modes.json"
    md.save(path)
    back = ModeData.load(path)
    np.testing.assert_array_equal(back.frequencies, md.frequencies)
    np.testing.assert_array_equal(back.lamb_dicke, md.lamb_dicke)
    np.testing.assert_array_equal(back.eigenvectors, md.eigenvectors)
    # second save is byte-identical
    path2 = tmp_path / "modes2.json"
    back.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_mode_table_missing_field():
    with pytest.raises(InputError):
        ModeData.from_dict(json.loads('{"eigenvectors": [[1]]}'))


def test_tabulated_modes_uses_table_frequencies():
    md = tabulated_modes(ELEVEN_ION_TABLE_MHZ, 0.1, 3.0)
    np.testing.assert_array_equal(md.frequencies, ELEVEN_ION_TABLE_MHZ)
    assert md.lamb_dicke.shape == (11, 11)


def test_eta_for_ion_range():
    md = tabulated_modes(ELEVEN_ION_TABLE_MHZ, 0.1, 3.0)
    with pytest.raises(InputError):
        md.eta_for_ion(12)


@given(st.integers(min_value=2, max_value=20))
def test_positions_symmetric_and_balanced(n):
    u = equilibrium_positions(n)
    np.testing.assert_allclose(u, -u[::-1], atol=1e-10)
    # force balance: u_i = sum_j sign(u_i - u_j) / (u_i - u_j)^2
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    force = np.sum(np.sign(d) / d**2, axis=1)
    np.testing.assert_allclose(force, u, atol=1e-9)


@given(st.integers(min_value=2, max_value=15))
def test_coupling_matrix_symmetric(n):
    k = coulomb_coupling(equilibrium_positions(n))
    np.testing.assert_allclose(k, k.T, atol=1e-12)
