"""Initialisation plus steepest descent, composed into the full localisation run."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

from ..bloch import BlochSolution
from ..errors import OLWannierError, StageError
from .descent import DESCENT_TOL, MAX_ITER, steepest_descent
from .disentangle import RESTARTS, SWEEP_TOL, reduce_interband
from .overlaps import GaugeField, OverlapSet, compute_overlaps
from .phases import phase_update
from .spread import SpreadReport, spread
from .synthesis import align_phases

log = logging.getLogger(__name__)


class BandGapWarning(UserWarning):
    pass


@dataclass
class PipelineOptions:
    rand_seed: int | None = 0
    step: float | None = None
    tol: float = DESCENT_TOL
    sweep_tol: float = SWEEP_TOL
    max_iter: int = MAX_ITER
    restarts: int = RESTARTS


@dataclass
class Diagnostics:
    stages: list = field(default_factory=list)

    def record(self, name, report: SpreadReport, seconds: float, **extra):
        entry = {"stage": name, "seconds": seconds, **report.to_dict(), **extra}
        self.stages.append(entry)

    def omegas(self):
        return {s["stage"]: s["omega"] for s in self.stages}

    def to_dict(self):
        return {"stages": self.stages}


@dataclass
class LocalizationResult:
    overlaps: OverlapSet
    report: SpreadReport
    diagnostics: Diagnostics

    @property
    def gauge(self) -> GaugeField:
        return self.overlaps.gauge


def _stage(name, fn, diagnostics, *args, **kwargs):
    start = time.perf_counter()
    try:
        out = fn(*args, **kwargs)
    except OLWannierError as exc:
        raise StageError(f"stage {name!r} failed: {exc}", stage=name, cause=type(exc).__name__) from exc
    return out, time.perf_counter() - start


def check_isolated(bloch: BlochSolution, J: int):
    gap = bloch.gap_above(J)
    if gap <= 0:
        warnings.warn(
            f"the lowest {J} bands are not separated from band {J + 1} on the mesh (gap {gap:.3g} E_R)",
            BandGapWarning,
        )
    return gap


def _descent(overlaps, mode, options, diagnostics, name):
    res, sec = _stage(name, steepest_descent, diagnostics, overlaps, mode=mode,
                      step=options.step, tol=options.tol, max_iter=options.max_iter)
    diagnostics.record(name, res.report, sec, iterations=res.iterations, converged=res.converged)
    return res.overlaps


def _phases(overlaps, diagnostics, name):
    out, sec = _stage(name, phase_update, diagnostics, overlaps)
    diagnostics.record(name, spread(out), sec)
    return out


def localize(bloch: BlochSolution, J: int, options: PipelineOptions | None = None, overlaps: OverlapSet | None = None) -> LocalizationResult:
    """Maximally localised generalised Wannier gauge for the lowest ``J`` bands.

    Stages: phase update, phase-only descent, inter-band reduction (after a
    random band permutation at each k), phase update, phase-only descent and
    finally unrestricted descent.  The spread is recorded after each stage.
    The returned gauge carries per-band global phases that make the
    Wannier functions real where possible.
    """
    options = options or PipelineOptions()
    check_isolated(bloch, J)
    diagnostics = Diagnostics()
    if overlaps is None:
        overlaps = compute_overlaps(bloch, J)
    diagnostics.record("initial", spread(overlaps), 0.0)

    current = _phases(overlaps, diagnostics, "phase_update_1")
    current = _descent(current, "phase_only", options, diagnostics, "phase_descent_1")
    if J > 1:
        (current, traces), sec = _stage(
            "reduce_interband", reduce_interband, diagnostics, current,
            options.rand_seed, options.sweep_tol, restarts=options.restarts,
        )
        diagnostics.record("reduce_interband", spread(current), sec,
                           sweeps=[len(t) - 1 for t in traces])
    current = _phases(current, diagnostics, "phase_update_2")
    current = _descent(current, "phase_only", options, diagnostics, "phase_descent_2")
    current = _descent(current, "full", options, diagnostics, "full_descent")
    current = current.refreshed()
    current = current.with_gauge(align_phases(bloch, current.gauge))
    report = spread(current)
    log.info("localisation finished: Omega = %.12g", report.omega)
    return LocalizationResult(current, report, diagnostics)


def ordinary_gauge(bloch: BlochSolution, J: int, options: PipelineOptions | None = None, overlaps: OverlapSet | None = None) -> LocalizationResult:
    """Band-by-band (unmixed) localisation: phase update plus phase-only descent."""
    options = options or PipelineOptions()
    if J > 1:
        gap = bloch.min_internal_gap(J)
        if gap < 1e-6:
            warnings.warn(f"retained bands nearly touch (min gap {gap:.3g} E_R)", BandGapWarning)
    diagnostics = Diagnostics()
    if overlaps is None:
        overlaps = compute_overlaps(bloch, J)
    diagnostics.record("initial", spread(overlaps), 0.0)
    current = _phases(overlaps, diagnostics, "phase_update")
    current = _descent(current, "phase_only", options, diagnostics, "phase_descent")
    current = current.refreshed()
    current = current.with_gauge(align_phases(bloch, current.gauge))
    return LocalizationResult(current, spread(current), diagnostics)
