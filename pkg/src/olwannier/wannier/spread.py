"""Spread functional on the k-mesh and its decomposition."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import IllConditionedLogError
from .overlaps import OverlapSet

LOG_FLOOR = 1e-12


def diagonal_phases(overlaps: OverlapSet):
    """Im ln M_nn on the principal branch, shape (nk, nb, J)."""
    diag = np.diagonal(overlaps.matrices, axis1=2, axis2=3)
    small = np.abs(diag).min()
    if small < LOG_FLOOR:
        raise IllConditionedLogError(
            "diagonal overlap too small for a reliable logarithm; gauge is far from smooth",
            min_abs=float(small),
        )
    return np.angle(diag)


def raw_centers(overlaps: OverlapSet, phases=None):
    """Centres -1/N sum_kb w_b b Im ln M_nn, not folded into the home cell."""
    if phases is None:
        phases = diagonal_phases(overlaps)
    mesh = overlaps.mesh
    return -np.einsum("b,bi,kbn->ni", mesh.weights, mesh.bvecs, phases) / mesh.nk


@dataclass(frozen=True)
class SpreadReport:
    """Spread (length^2) and its parts; ``centers`` folded into the home cell."""

    omega: float
    omega_i: float
    omega_tilde: float
    omega_id: float
    omega_iod: float
    omega_d: float
    omega_od: float
    omega_id_bands: np.ndarray
    omega_d_bands: np.ndarray
    centers: np.ndarray
    raw_centers: np.ndarray

    def decomposition_error(self) -> float:
        parts = self.omega_id + self.omega_iod + self.omega_d + self.omega_od
        return abs(parts - self.omega) / max(abs(self.omega), 1e-300)

    def to_dict(self):
        out = {}
        for key, value in asdict(self).items():
            out[key] = value.tolist() if isinstance(value, np.ndarray) else float(value)
        return out


def spread(overlaps: OverlapSet) -> SpreadReport:
    """Evaluate the spread and its band-diagonal / off-diagonal parts.

    The total is evaluated independently of the parts,
    ``Omega = 1/N sum w_b sum_n [1 - |M_nn|^2 + (Im ln M_nn)^2] - sum_n |r_n|^2``,
    so that the decomposition identity is a genuine check.
    """
    mesh = overlaps.mesh
    w = mesh.weights
    nk = mesh.nk
    m = overlaps.matrices
    phases = diagonal_phases(overlaps)
    centers = raw_centers(overlaps, phases)
    abs2 = np.abs(m) ** 2
    diag2 = np.diagonal(abs2, axis1=2, axis2=3)
    offdiag = (abs2.sum(axis=(2, 3)) - diag2.sum(axis=2))

    id_bands = np.einsum("b,kbn->n", w, 1.0 - diag2) / nk
    iod = -np.einsum("b,kb->", w, offdiag) / nk
    od = np.einsum("b,kb->", w, offdiag) / nk
    q = phases + np.einsum("bi,ni->bn", mesh.bvecs, centers)[None]
    d_bands = np.einsum("b,kbn->n", w, q**2) / nk

    total = np.einsum("b,kbn->", w, 1.0 - diag2 + phases**2) / nk - np.sum(centers**2)
    omega_i = np.einsum("b,kb->", w, overlaps.J - abs2.sum(axis=(2, 3))) / nk
    geometry = mesh.geometry
    return SpreadReport(
        omega=float(total),
        omega_i=float(omega_i),
        omega_tilde=float(total - omega_i),
        omega_id=float(id_bands.sum()),
        omega_iod=float(iod),
        omega_d=float(d_bands.sum()),
        omega_od=float(od),
        omega_id_bands=id_bands,
        omega_d_bands=d_bands,
        centers=geometry.wrap(centers),
        raw_centers=centers,
    )
