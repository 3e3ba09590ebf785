"""Gauge optimisation for maximally localised generalised Wannier states."""

from .descent import DescentResult, gradient, steepest_descent
from .disentangle import reduce_interband
from .overlaps import GaugeField, OverlapSet, compute_overlaps
from .phases import phase_update
from .pipeline import LocalizationResult, PipelineOptions, localize, ordinary_gauge
from .spread import SpreadReport, spread
from .synthesis import WannierFunction, align_phases, synthesize_all, synthesize_wannier

__all__ = [
    "DescentResult",
    "GaugeField",
    "LocalizationResult",
    "OverlapSet",
    "PipelineOptions",
    "SpreadReport",
    "WannierFunction",
    "align_phases",
    "compute_overlaps",
    "gradient",
    "localize",
    "ordinary_gauge",
    "phase_update",
    "reduce_interband",
    "spread",
    "steepest_descent",
    "synthesize_all",
    "synthesize_wannier",
]
