import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from olwannier.errors import MeshGeometryError
from olwannier.wannier import GaugeField, compute_overlaps, phase_update, spread
from olwannier.wannier.overlaps import random_unitaries
from olwannier.wannier.phases import direction_index, loop_berry_phases, loops
from olwannier.wannier.spread import diagonal_phases
from conftest import bloch_for


def _diagonal_gauge(overlaps, seed):
    rng = np.random.default_rng(seed)
    phases = rng.uniform(-np.pi, np.pi, (overlaps.mesh.nk, overlaps.J))
    v = np.zeros((overlaps.mesh.nk, overlaps.J, overlaps.J), dtype=complex)
    idx = np.arange(overlaps.J)
    v[:, idx, idx] = np.exp(1j * phases)
    return v


def _links_at_target(overlaps, axis):
    b = direction_index(overlaps.mesh, axis)
    paths = loops(overlaps.mesh, axis)
    links = diagonal_phases(overlaps)[:, b, :][paths]
    return np.abs(links - links[:, :1]).max()


def test_links_uniform_along_loops_1d(sl_overlaps):
    out = phase_update(sl_overlaps.transform(_diagonal_gauge(sl_overlaps, 3)))
    assert _links_at_target(out, 0) < 1e-10


def test_links_uniform_along_loops_2d(hex_run):
    bloch, _ = hex_run
    ov = compute_overlaps(bloch, 1)
    out = phase_update(ov.transform(_diagonal_gauge(ov, 4)))
    for axis in range(2):
        assert _links_at_target(out, axis) < 1e-10


@given(st.integers(0, 2**31))
def test_berry_phase_unchanged(sl_overlaps, seed):
    start = sl_overlaps.transform(_diagonal_gauge(sl_overlaps, seed))
    before = loop_berry_phases(start, 0)
    after = loop_berry_phases(phase_update(start), 0)
    diff = np.angle(np.exp(1j * (after - before)))
    assert np.abs(diff).max() < 1e-12


@given(st.integers(0, 2**31))
def test_offdiagonal_spread_unchanged(sl_overlaps, seed):
    rng = np.random.default_rng(seed)
    start = sl_overlaps.with_gauge(GaugeField(random_unitaries(rng, sl_overlaps.mesh.nk, 2)))
    before, after = spread(start), spread(phase_update(start))
    assert abs(after.omega_od - before.omega_od) < 1e-12
    assert abs(after.omega_i - before.omega_i) < 1e-10


def test_single_band_1d_diagonal_spread_vanishes():
    ov = compute_overlaps(bloch_for("sinusoidal_1d", 10.0, None, 16, 100.0), 1)
    out = phase_update(ov.transform(_diagonal_gauge(ov, 5)))
    assert spread(out).omega_d < 1e-10


def test_missing_axis_step_raises(sl_overlaps):
    class Fake:
        geometry = sl_overlaps.mesh.geometry
        offsets = np.array([[2], [-2]])

    with pytest.raises(MeshGeometryError):
        direction_index(Fake, 0)
