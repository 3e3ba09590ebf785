"""Plane-wave band structure of a periodic potential."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, OLWannierError, PotentialError, SolverError
from .lattice import KMesh, PotentialSpec, kinetic


def _coupling(potential: PotentialSpec, gvectors: np.ndarray) -> np.ndarray:
    """Matrix of V_{G - G'} over the plane-wave set."""
    n = gvectors.shape[0]
    diff = gvectors[:, None, :] - gvectors[None, :, :]
    real = potential.has_inversion and potential.has_time_reversal and potential.is_real()
    out = np.zeros((n, n), dtype=float if real else complex)
    for key, value in potential.coefficients.items():
        mask = np.all(diff == np.array(key), axis=-1)
        out[mask] += value.real if real else value
    return out


def check_cutoff(potential: PotentialSpec, cutoff: float):
    if potential.max_kinetic() > cutoff * (1 + 1e-12):
        raise PotentialError(
            "cutoff energy is below the highest Fourier component of the potential",
            cutoff=cutoff,
            needed=potential.max_kinetic(),
        )


def hamiltonian(k, potential: PotentialSpec, mesh: KMesh, coupling=None) -> np.ndarray:
    """Plane-wave Hamiltonian at Cartesian wave vector ``k`` in recoils."""
    if coupling is None:
        coupling = _coupling(potential, mesh.gvectors)
    h = coupling.copy()
    h[np.diag_indices_from(h)] += kinetic(mesh.gcart + np.asarray(k, dtype=float))
    return h


def solve_at_k(k, potential: PotentialSpec, mesh: KMesh, coupling=None):
    """All eigenpairs at ``k``: energies ascending, coefficient vectors as columns.

    With inversion and time reversal the Hamiltonian is assembled real and the
    returned coefficient vectors are real.
    """
    if mesh.npw == 0:
        raise SolverError("empty plane-wave set")
    h = hamiltonian(k, potential, mesh, coupling)
    if np.abs(h - h.conj().T).max() > 1e-12 * max(1.0, np.abs(h).max()):
        raise ConsistencyError("assembled Hamiltonian is not hermitian", k=np.asarray(k))
    energies, vectors = np.linalg.eigh(h)
    return energies, vectors


@dataclass(frozen=True)
class BlochSolution:
    """Energies ``(nk, nbands)`` and coefficients ``(nk, npw, nbands)`` on a mesh."""

    mesh: KMesh
    potential: PotentialSpec
    energies: np.ndarray
    coefficients: np.ndarray

    @property
    def nbands(self) -> int:
        return self.energies.shape[1]

    def gap_above(self, J: int) -> float:
        """Smallest separation between band ``J`` and band ``J+1`` over the mesh."""
        if J >= self.nbands:
            return np.inf
        return float(self.energies[:, J].min() - self.energies[:, J - 1].max())

    def min_internal_gap(self, J: int) -> float:
        if J < 2:
            return np.inf
        return float(np.diff(self.energies[:, :J], axis=1).min())


def solve_all(potential: PotentialSpec, mesh: KMesh, J_total: int | None = None, threads: int = 1) -> BlochSolution:
    """Solve every mesh point, keeping the lowest ``J_total`` bands."""
    if potential.geometry is not mesh.geometry and not np.allclose(
        potential.geometry.direct, mesh.geometry.direct
    ):
        raise SolverError("potential and mesh use different lattices")
    check_cutoff(potential, mesh.cutoff)
    if J_total is None:
        J_total = mesh.npw
    if J_total > mesh.npw:
        raise SolverError("more bands requested than plane waves", J_total=J_total, npw=mesh.npw)
    coupling = _coupling(potential, mesh.gvectors)

    def one(i):
        try:
            e, c = solve_at_k(mesh.kvecs[i], potential, mesh, coupling)
        except OLWannierError as exc:
            exc.context["k_index"] = i
            exc.context["k"] = mesh.kvecs[i]
            raise
        return e[:J_total], c[:, :J_total]

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(mesh.nk)))
    else:
        results = [one(i) for i in range(mesh.nk)]
    energies = np.array([r[0] for r in results])
    coefficients = np.array([r[1] for r in results])
    energies.setflags(write=False)
    coefficients.setflags(write=False)
    return BlochSolution(mesh, potential, energies, coefficients)


def high_symmetry_points(geometry) -> dict:
    """Labelled special points in reciprocal coordinates for the given lattice."""
    d = geometry.dimension
    if d == 1:
        return {"G": np.array([0.0]), "X": np.array([0.5])}
    g = geometry.reciprocal
    cos = g[0] @ g[1] / (np.linalg.norm(g[0]) * np.linalg.norm(g[1]))
    ratio = np.linalg.norm(g[0]) / np.linalg.norm(g[1])
    points = {"G": np.zeros(2)}
    if abs(ratio - 1) < 1e-9 and abs(cos + 0.5) < 1e-9:
        points.update(M=np.array([0.5, 0.0]), K=np.array([2.0, 1.0]) / 3.0)
    elif abs(ratio - 1) < 1e-9 and abs(cos - 0.5) < 1e-9:
        points.update(M=np.array([0.5, 0.0]), K=np.array([1.0, 1.0]) / 3.0)
    else:
        points.update(
            X=np.array([0.5, 0.0]), Y=np.array([0.0, 0.5]), M=np.array([0.5, 0.5])
        )
    return points


_ALIASES = {"Γ": "G", "GAMMA": "G", "Gamma": "G"}


@dataclass(frozen=True)
class BandPath:
    labels: tuple
    label_positions: np.ndarray
    distance: np.ndarray
    kvecs: np.ndarray
    energies: np.ndarray

    def max_step(self) -> float:
        if len(self.kvecs) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.kvecs, axis=0), axis=1).max())

    def write_csv(self, path):
        d = self.kvecs.shape[1]
        header = ["distance_inv_lambda"] + [f"k{i + 1}_inv_lambda" for i in range(d)]
        header += [f"E{m + 1}_ER" for m in range(self.energies.shape[1])]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for s, k, e in zip(self.distance, self.kvecs, self.energies):
                writer.writerow([repr(float(s))] + [repr(float(x)) for x in k] + [repr(float(x)) for x in e])


def read_band_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return header, body


def bands_on_path(potential: PotentialSpec, mesh: KMesh, path_spec, samples: int = 60, J_total: int = 6) -> BandPath:
    """Energies along straight segments between labelled points.

    ``path_spec`` is a sequence of labels (``"G"``/``"Γ"``, ``"M"``, ``"K"``,
    ``"X"`` ...) or explicit reciprocal coordinates.  ``samples`` points are
    taken per segment; each is solved afresh.
    """
    geometry = potential.geometry
    special = high_symmetry_points(geometry)
    labels, stops = [], []
    for item in path_spec:
        if isinstance(item, str):
            key = _ALIASES.get(item, item)
            if key not in special:
                raise OLWannierError(f"unknown high-symmetry label {item!r}", known=sorted(special))
            labels.append(item)
            stops.append(special[key])
        else:
            labels.append(str(tuple(item)))
            stops.append(np.asarray(item, dtype=float))
    if len(stops) < 2:
        raise OLWannierError("a path needs at least two points")
    check_cutoff(potential, mesh.cutoff)
    coupling = _coupling(potential, mesh.gvectors)
    frac = []
    for a, b in zip(stops[:-1], stops[1:]):
        t = np.linspace(0.0, 1.0, samples, endpoint=False)[:, None]
        frac.append(a + t * (b - a))
    frac.append(stops[-1][None, :])
    frac = np.concatenate(frac)
    kvecs = geometry.reciprocal_cartesian(frac)
    steps = np.r_[0.0, np.linalg.norm(np.diff(kvecs, axis=0), axis=1)]
    distance = np.cumsum(steps)
    J_total = min(J_total, mesh.npw)
    energies = np.array([solve_at_k(k, potential, mesh, coupling)[0][:J_total] for k in kvecs])
    positions = distance[np.r_[np.arange(len(stops) - 1) * samples, len(frac) - 1]]
    return BandPath(tuple(labels), positions, distance, kvecs, energies)
