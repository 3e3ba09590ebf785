import numpy as np
import pytest

from olwannier.errors import StepSizeError
from olwannier.wannier import compute_overlaps, gradient, phase_update, spread, steepest_descent
from olwannier.wannier.overlaps import expm_antihermitian
from conftest import bloch_for


def _smooth_start(sl_overlaps, seed=0, scale=0.05):
    """Phase-smoothed overlaps with a small random mixing, away from the log branch cut."""
    rng = np.random.default_rng(seed)
    base = phase_update(sl_overlaps)
    shape = (base.mesh.nk, 2, 2)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x = scale * 0.5 * (a - np.conj(np.swapaxes(a, 1, 2)))
    return base.transform(expm_antihermitian(x))


def test_descent_trace_non_increasing(sl_overlaps):
    res = steepest_descent(_smooth_start(sl_overlaps), "full")
    assert res.converged
    assert np.all(np.diff(res.trace) <= 1e-12 * res.trace[0])


def test_gradient_matches_finite_differences(sl_overlaps):
    start = _smooth_start(sl_overlaps)
    g = gradient(start)
    nk = start.mesh.nk
    rng = np.random.default_rng(11)
    h = 1e-5
    for _ in range(10):
        a = rng.standard_normal((nk, 2, 2)) + 1j * rng.standard_normal((nk, 2, 2))
        x = 0.5 * (a - np.conj(np.swapaxes(a, 1, 2)))
        plus = spread(start.transform(expm_antihermitian(h * x))).omega
        minus = spread(start.transform(expm_antihermitian(-h * x))).omega
        fd = (plus - minus) / (2 * h)
        analytic = float(np.real(np.sum(np.conj(g) * x))) / nk
        assert abs(fd - analytic) <= 1e-5 * abs(analytic)


def test_gradient_vanishes_at_stationary_point(sl_overlaps):
    res = steepest_descent(_smooth_start(sl_overlaps), "full", tol=1e-14)
    g = gradient(res.overlaps)
    assert np.sqrt(np.sum(np.abs(g) ** 2) / res.overlaps.mesh.nk) < 1e-5


def test_phase_only_keeps_offdiagonal_spread(sl_overlaps):
    start = _smooth_start(sl_overlaps)
    res = steepest_descent(start, "phase_only")
    assert res.overlaps.gauge.matrices.shape == start.gauge.matrices.shape
    assert abs(res.report.omega_od - spread(start).omega_od) < 1e-12
    assert abs(res.report.omega_i - spread(start).omega_i) < 1e-10
    assert res.report.omega <= spread(start).omega


def test_phase_descent_agrees_with_phase_update_for_single_band():
    bloch = bloch_for("sinusoidal_1d", 10.0, None, 16, 100.0)
    ov = compute_overlaps(bloch, 1)
    smooth = spread(phase_update(ov)).omega
    # in 1D the uniform link phases are already optimal for one band
    res = steepest_descent(phase_update(ov), "full")
    assert abs(res.report.omega - smooth) < 1e-8


def test_bad_step_arguments(sl_overlaps):
    with pytest.raises(ValueError):
        steepest_descent(sl_overlaps, "diagonal")
    with pytest.raises(ValueError):
        steepest_descent(sl_overlaps, "full", step=-1.0)


def test_huge_step_raises(sl_overlaps, monkeypatch):
    import olwannier.wannier.descent as descent

    monkeypatch.setattr(descent, "MAX_HALVINGS", 0)
    with pytest.raises(StepSizeError) as info:
        steepest_descent(_smooth_start(sl_overlaps, scale=0.3), "full", step=50.0)
    assert info.value.context["iteration"] == 0


def test_restart_at_converged_gauge_takes_no_steps(sl_overlaps):
    res = steepest_descent(_smooth_start(sl_overlaps), "full")
    again = steepest_descent(res.overlaps, "full")
    assert again.iterations == 0 and again.converged
