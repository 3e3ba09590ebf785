import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from olwannier.errors import DegenerateLatticeError, PotentialError
from olwannier.lattice import (
    PRESETS,
    PotentialSpec,
    build_geometry,
    build_kmesh,
    preset_potential,
    sample_grid,
)
from oracles import dense_potential_range

HEX = [[1.0, 0.0], [0.5, np.sqrt(3) / 2]]


def test_geometry_1d_half_wavelength():
    g = build_geometry(1, [[0.5]])
    assert g.reciprocal[0, 0] == pytest.approx(4 * np.pi)
    assert g.volume == pytest.approx(0.5)


def test_geometry_square():
    L = 0.7
    g = build_geometry(2, [[L, 0], [0, L]])
    np.testing.assert_allclose(g.reciprocal, 2 * np.pi / L * np.eye(2), atol=1e-12)


def test_geometry_hexagonal_duality_against_inverse():
    g = build_geometry(2, HEX)
    oracle = 2 * np.pi * np.linalg.inv(np.array(HEX)).T
    np.testing.assert_allclose(g.reciprocal, oracle, rtol=1e-12)
    np.testing.assert_allclose(g.direct @ g.reciprocal.T, 2 * np.pi * np.eye(2), atol=1e-12)
    cos = g.reciprocal[0] @ g.reciprocal[1] / np.linalg.norm(g.reciprocal, axis=1).prod()
    assert cos == pytest.approx(-0.5)
    assert g.volume == pytest.approx(np.sqrt(3) / 2)


def test_degenerate_lattice_rejected():
    with pytest.raises(DegenerateLatticeError):
        build_geometry(2, [[1, 0], [2, 0]])


def test_superlattice_s0_components():
    V0 = 13.0
    p = preset_potential("superlattice_1d", V0, 0.0)
    assert p.coefficients == {(0,): V0 / 2, (1,): -V0 / 4, (-1,): -V0 / 4}


def _local_minima_1d(values):
    return int(np.sum((values < np.roll(values, 1)) & (values < np.roll(values, -1))))


def test_superlattice_two_minima_per_cell():
    p = preset_potential("superlattice_1d", 20.0, 0.5)
    v = p.evaluate(sample_grid(p.geometry, 2000))
    assert _local_minima_1d(v) == 2
    assert _local_minima_1d(preset_potential("superlattice_1d", 20.0, 0.0).evaluate(sample_grid(p.geometry, 2000))) == 1


@pytest.mark.parametrize("V0", [1.0, 7.5, 30.0])
def test_kagome_depth_is_range(V0):
    p = preset_potential("kagome_2d", V0)
    # dense scan undershoots the true range by O(h^2)
    assert dense_potential_range(p) == pytest.approx(V0, rel=1e-4)
    assert dense_potential_range(p) <= V0 * (1 + 1e-12)


def test_presets_flags_and_size():
    counts = {"sinusoidal_1d": 3, "superlattice_1d": 5, "hexagonal_2d": 7, "kagome_2d": 13}
    for name in PRESETS:
        p = preset_potential(name, 5.0, 0.3 if name == "superlattice_1d" else None)
        assert p.has_inversion and p.has_time_reversal
        assert len(p.coefficients) == counts[name]


def test_preset_errors():
    with pytest.raises(PotentialError):
        preset_potential("square_2d", 1.0)
    with pytest.raises(PotentialError):
        preset_potential("superlattice_1d", 1.0, 1.0)
    with pytest.raises(PotentialError):
        preset_potential("hexagonal_2d", 1.0, 0.2)
    with pytest.raises(PotentialError):
        preset_potential("sinusoidal_1d", -1.0)


def test_hermiticity_violation_rejected():
    g = build_geometry(1, [[0.5]])
    with pytest.raises(PotentialError):
        PotentialSpec(g, {(1,): 1.0 + 1.0j, (-1,): 1.0 + 1.0j}, has_inversion=False)


def test_mesh_1d_weights():
    g = build_geometry(1, [[0.5]])
    mesh = build_kmesh(g, 16)
    dk = 4 * np.pi / 16
    assert mesh.nb == 2
    np.testing.assert_allclose(mesh.weights, 1 / (2 * dk**2), rtol=1e-12)


def test_mesh_square_weights():
    g = build_geometry(2, [[1, 0], [0, 1]])
    mesh = build_kmesh(g, 8)
    dk = 2 * np.pi / 8
    assert mesh.nb == 4
    np.testing.assert_allclose(mesh.weights, 1 / (2 * dk**2), rtol=1e-10)


def test_mesh_hexagonal_weights():
    g = build_geometry(2, HEX)
    mesh = build_kmesh(g, 15)
    dk = np.linalg.norm(g.reciprocal[0]) / 15
    assert mesh.nb == 6
    np.testing.assert_allclose(mesh.weights, 1 / (3 * dk**2), rtol=1e-10)
    np.testing.assert_allclose(np.linalg.norm(mesh.bvecs, axis=1), dk, rtol=1e-12)


@pytest.mark.parametrize("name", PRESETS)
def test_mesh_invariants(name):
    p = preset_potential(name, 5.0, 0.5 if name == "superlattice_1d" else None)
    mesh = build_kmesh(p.geometry, 9 if p.geometry.dimension == 2 else 12)
    assert mesh.completeness_residual() < 1e-10
    assert np.all(mesh.weights > 0)
    # k + b = k[neighbour] + G_wrap
    lhs = mesh.kvecs[:, None, :] + mesh.bvecs[None]
    rhs = mesh.kvecs[mesh.neighbors] + p.geometry.reciprocal_cartesian(mesh.wraps)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_mesh_index_order():
    g = build_geometry(2, HEX)
    mesh = build_kmesh(g, 5)
    for i, c in enumerate(mesh.points):
        assert mesh.index_of(c) == i


preset_cases = st.sampled_from(PRESETS).flatmap(
    lambda name: st.tuples(
        st.just(name),
        st.floats(0.0, 40.0),
        st.floats(0.0, 0.99) if name == "superlattice_1d" else st.none(),
    )
)


@given(preset_cases, st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.lists(st.integers(-4, 4), min_size=2, max_size=2))
def test_potential_periodic(case, r, cell):
    name, V0, s = case
    p = preset_potential(name, V0, s)
    d = p.geometry.dimension
    r = np.array(r[:d])
    R = p.geometry.to_cartesian(np.array(cell[:d], dtype=float))
    assert abs(p.evaluate(r + R) - p.evaluate(r)) <= 1e-10 * max(1.0, V0)


@given(preset_cases)
def test_potential_reprojection(case):
    name, V0, s = case
    p = preset_potential(name, V0, s)
    n = 16
    values = p.evaluate(sample_grid(p.geometry, n))
    coeffs = np.fft.fftn(values) / values.size
    scale = max(1.0, V0)
    for key, v in p.coefficients.items():
        assert abs(coeffs[tuple(np.mod(key, n))] - v) <= 1e-10 * scale
    assert np.abs(coeffs).sum() - sum(abs(v) for v in p.coefficients.values()) <= 1e-10 * scale * n
