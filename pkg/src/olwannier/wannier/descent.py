"""Steepest descent of the spread over the gauge field."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import StepSizeError
from .overlaps import OverlapSet, dagger, expm_antihermitian
from .spread import SpreadReport, diagonal_phases, raw_centers, spread

log = logging.getLogger(__name__)

DESCENT_TOL = 1e-12
MAX_ITER = 5000
MAX_HALVINGS = 20
REUNITARIZE_EVERY = 50
BRANCH_MARGIN = 0.1


class BranchProximityWarning(UserWarning):
    pass


def _antiherm(b):
    return 0.5 * (b - dagger(b))


def _sym(b):
    return (b + dagger(b)) / 2j


def gradient(overlaps: OverlapSet, phase_only: bool = False) -> np.ndarray:
    """Gradient of the spread with respect to the generator W(k), shape (nk, J, J).

    Normalised so that moving U(k) -> U(k) exp(t X(k)) changes the spread by
    ``t/N sum_k Re tr(G(k)^+ X(k))``; ``-G`` is the descent direction.
    With ``phase_only`` the gradient is projected onto diagonal generators.
    """
    mesh = overlaps.mesh
    m = overlaps.matrices
    diag = np.diagonal(m, axis1=2, axis2=3)
    phases = diagonal_phases(overlaps)
    centers = raw_centers(overlaps, phases)
    q = phases + np.einsum("bi,ni->bn", mesh.bvecs, centers)[None]
    r = m * np.conj(diag)[:, :, None, :]
    t = (m / diag[:, :, None, :]) * q[:, :, None, :]
    g = 4.0 * np.einsum("b,kbij->kij", mesh.weights, _sym(t) - _antiherm(r))
    if phase_only:
        g = g * np.eye(overlaps.J)
    return g


def default_step(overlaps: OverlapSet) -> float:
    return 1.0 / (4.0 * float(np.sum(overlaps.mesh.weights)))


@dataclass
class DescentResult:
    overlaps: OverlapSet
    report: SpreadReport
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    step: float = 0.0

    @property
    def gauge(self):
        return self.overlaps.gauge


def steepest_descent(
    overlaps: OverlapSet,
    mode: str = "full",
    step: float | None = None,
    tol: float = DESCENT_TOL,
    max_iter: int = MAX_ITER,
) -> DescentResult:
    """Minimise the spread by steepest descent, U(k) -> U(k) exp(-step * G(k)).

    ``mode`` is ``"full"`` or ``"phase_only"``; the latter only applies
    diagonal (pure phase) updates and leaves the off-diagonal spread fixed.
    Stops once the decrease predicted for the next step falls below
    ``tol``, so restarting from a converged gauge takes no steps.  A step that raises the spread is retried with half the step
    size; after ``MAX_HALVINGS`` consecutive failures ``StepSizeError`` is
    raised.
    """
    if mode not in ("full", "phase_only"):
        raise ValueError(f"unknown descent mode {mode!r}")
    phase_only = mode == "phase_only"
    if step is None:
        step = default_step(overlaps)
    if step <= 0:
        raise ValueError("step size must be positive")
    # the stopping rule uses the requested step, not one shrunk by halvings
    scale = step
    nk = overlaps.mesh.nk

    current = overlaps
    report = spread(current)
    trace = [report.omega]
    converged = False
    it = 0
    warned = False
    while it < max_iter:
        g = gradient(current, phase_only)
        predicted = scale * float(np.sum(np.abs(g) ** 2)) / nk
        if predicted < tol:
            converged = True
            break
        halvings = 0
        eps = step
        while True:
            trial = current.transform(expm_antihermitian(-eps * g))
            new = spread(trial)
            if new.omega <= report.omega + 1e-12 * max(1.0, abs(report.omega)):
                break
            halvings += 1
            eps *= 0.5
            if halvings > MAX_HALVINGS:
                raise StepSizeError(
                    "spread keeps increasing; use a smaller step size",
                    step=step,
                    iteration=it,
                    omega=report.omega,
                )
        if halvings:
            step = eps
        it += 1
        if it % REUNITARIZE_EVERY == 0:
            trial = trial.refreshed()
            new = spread(trial)
        if not warned and np.abs(diagonal_phases(trial)).max() > np.pi - BRANCH_MARGIN:
            warnings.warn("overlap phases approach the branch cut of the logarithm", BranchProximityWarning)
            warned = True
        current, report = trial, new
        trace.append(report.omega)
    if not converged:
        log.warning("steepest descent stopped at max_iter=%d without converging", max_iter)
    current = current.refreshed()
    report = spread(current)
    return DescentResult(current, report, trace, it, converged, step)
