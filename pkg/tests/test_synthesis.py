import numpy as np
import pytest

from olwannier.errors import AliasingError, ResolutionError
from olwannier.wannier.synthesis import read_wannier_csv, synthesize_all, synthesize_wannier
from conftest import localized


@pytest.fixture(scope="module")
def single():
    return localized("sinusoidal_1d", 20.0, 1, M=16, cutoff=100.0)


def test_norm_over_mesh_supercell(single):
    bloch, result = single
    w = synthesize_wannier(bloch, result.gauge, 0)
    assert w.norm() == pytest.approx(1.0, abs=1e-10)


def test_functions_are_real(hex_run):
    for bloch, result in (localized("superlattice_1d", 20.0, 2, 0.5, 32, 200.0), hex_run):
        for w in synthesize_all(bloch, result.gauge, 5):
            assert w.imag_fraction() < 1e-5


def test_translation(single):
    bloch, result = single
    w0 = synthesize_wannier(bloch, result.gauge, 0, (0,), 5)
    w2 = synthesize_wannier(bloch, result.gauge, 0, (2,), 5)
    r = np.linspace(-0.4, 0.4, 17)[:, None]
    np.testing.assert_allclose(w2.evaluate(r + 1.0), w0.evaluate(r), atol=1e-12)
    np.testing.assert_allclose(w2.values, w0.values, atol=1e-12)
    assert w2.center()[0] == pytest.approx(w0.center()[0] + 1.0, abs=1e-8)


def test_grid_agrees_with_direct_summation(hex_run):
    bloch, result = hex_run
    w = synthesize_wannier(bloch, result.gauge, 1, None, 3)
    pos = w.positions()
    np.testing.assert_allclose(w.evaluate(pos), w.values, atol=1e-10)


def test_supercell_limits(single):
    bloch, result = single
    with pytest.raises(AliasingError):
        synthesize_wannier(bloch, result.gauge, 0, None, 2)
    with pytest.raises(AliasingError):
        synthesize_wannier(bloch, result.gauge, 0, None, 17)
    with pytest.raises(ResolutionError):
        synthesize_wannier(bloch, result.gauge, 0, None, 5, points_per_cell=2)


def test_csv_round_trip(single, tmp_path):
    bloch, result = single
    w = synthesize_wannier(bloch, result.gauge, 0, None, 3, 12)
    w.write_csv(tmp_path / "w.csv")
    pos, vals = read_wannier_csv(tmp_path / "w.csv")
    np.testing.assert_array_equal(pos, w.positions().reshape(-1, 1))
    np.testing.assert_array_equal(vals, w.values.reshape(-1))
