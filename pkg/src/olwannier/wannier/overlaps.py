"""Gauge fields and the neighbour overlap matrices M^(k,b)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bloch import BlochSolution
from ..errors import CutoffTooSmallError, OLWannierError
from ..lattice import KMesh

# plane-wave weight allowed to fall outside the basis when a neighbour is folded
WRAP_LOSS_TOL = 1e-3


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def expm_antihermitian(w):
    """exp(W) for a stack of anti-hermitian matrices, exactly unitary."""
    h = 1j * w
    h = 0.5 * (h + dagger(h))
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * vals)[..., None, :]) @ dagger(vecs)


def polar_unitary(a):
    """Closest unitary matrix (polar factor) for a stack of square matrices."""
    u, _, vh = np.linalg.svd(a)
    return u @ vh


@dataclass(frozen=True)
class GaugeField:
    """Unitary band-mixing matrices U^(k), shape (nk, J, J)."""

    matrices: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrices, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)

    @classmethod
    def identity(cls, nk, J):
        return cls(np.broadcast_to(np.eye(J, dtype=complex), (nk, J, J)).copy())

    @property
    def nk(self):
        return self.matrices.shape[0]

    @property
    def J(self):
        return self.matrices.shape[1]

    def unitarity_error(self) -> float:
        u = self.matrices
        return float(np.abs(dagger(u) @ u - np.eye(self.J)).max())

    def reunitarized(self, threshold=1e-12) -> "GaugeField":
        if self.unitarity_error() <= threshold:
            return self
        return GaugeField(polar_unitary(self.matrices))

    def is_diagonal(self, tol=1e-12) -> bool:
        off = self.matrices * (1 - np.eye(self.J))
        return bool(np.abs(off).max() <= tol)

    def __matmul__(self, other: "GaugeField") -> "GaugeField":
        return GaugeField(self.matrices @ other.matrices)


def _shift_maps(mesh: KMesh):
    """Index map G -> position of G + G_wrap for every distinct fold vector."""
    maps = {}
    for wrap in {tuple(w) for w in mesh.wraps.reshape(-1, mesh.geometry.dimension)}:
        shifted = mesh.gvectors + np.array(wrap)
        maps[wrap] = np.array([mesh.g_index(g) for g in shifted])
    return maps


def bloch_overlaps(bloch: BlochSolution, J: int) -> np.ndarray:
    """Overlaps of the lowest ``J`` Bloch states in the solver's own gauge."""
    mesh = bloch.mesh
    if J > bloch.nbands:
        raise OLWannierError("more Wannier bands requested than solved", J=J, solved=bloch.nbands)
    coeffs = bloch.coefficients[:, :, :J]
    maps = _shift_maps(mesh)
    out = np.empty((mesh.nk, mesh.nb, J, J), dtype=complex)
    for k in range(mesh.nk):
        left = np.conj(coeffs[k]).T
        for j in range(mesh.nb):
            kb = mesh.neighbors[k, j]
            idx = maps[tuple(mesh.wraps[k, j])]
            inside = idx >= 0
            right = np.zeros((mesh.npw, J), dtype=coeffs.dtype)
            right[inside] = coeffs[kb][idx[inside]]
            lost = 1.0 - np.sum(np.abs(right) ** 2, axis=0)
            if lost.max() > WRAP_LOSS_TOL:
                raise CutoffTooSmallError(
                    "folding k+b leaves too much of the Bloch state outside the plane-wave basis",
                    k_index=k,
                    b_index=j,
                    lost_weight=float(lost.max()),
                )
            out[k, j] = left @ right
    return out


@dataclass(frozen=True)
class OverlapSet:
    """Overlap matrices ``matrices[k, b] = <u~_m(k)|u~_n(k+b)>`` for a gauge.

    ``base`` keeps the overlaps of the unrotated Bloch states so that any
    gauge can be re-applied from scratch.
    """

    mesh: KMesh
    base: np.ndarray
    gauge: GaugeField
    matrices: np.ndarray

    @property
    def J(self):
        return self.base.shape[-1]

    @property
    def weights(self):
        return self.mesh.weights

    def with_gauge(self, gauge: GaugeField) -> "OverlapSet":
        u = gauge.matrices
        ub = u[self.mesh.neighbors]
        m = dagger(u)[:, None] @ self.base @ ub
        m.setflags(write=False)
        return OverlapSet(self.mesh, self.base, gauge, m)

    def transform(self, v) -> "OverlapSet":
        """Apply U -> U V with ``v`` of shape (nk, J, J); M -> V(k)^+ M V(k+b)."""
        v = np.asarray(v)
        gauge = GaugeField(self.gauge.matrices @ v)
        m = dagger(v)[:, None] @ self.matrices @ v[self.mesh.neighbors]
        m.setflags(write=False)
        return OverlapSet(self.mesh, self.base, gauge, m)

    def refreshed(self) -> "OverlapSet":
        return self.with_gauge(self.gauge.reunitarized())

    def consistency_error(self) -> float:
        opp = self.mesh.opposite()
        back = self.matrices[self.mesh.neighbors, opp[None, :]]
        return float(np.abs(self.matrices - dagger(back)).max())


def compute_overlaps(bloch: BlochSolution, J: int, gauge: GaugeField | None = None) -> OverlapSet:
    base = bloch_overlaps(bloch, J)
    base.setflags(write=False)
    if gauge is None:
        gauge = GaugeField.identity(bloch.mesh.nk, J)
    if gauge.J != J or gauge.nk != bloch.mesh.nk:
        raise OLWannierError("gauge shape does not match the band selection", J=J)
    return OverlapSet(bloch.mesh, base, gauge, base).with_gauge(gauge)


def random_unitaries(rng, nk, J):
    """Haar-random unitary matrices, shape (nk, J, J)."""
    z = (rng.standard_normal((nk, J, J)) + 1j * rng.standard_normal((nk, J, J))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=1, axis2=2)
    return q * (d / np.abs(d))[:, None, :]
