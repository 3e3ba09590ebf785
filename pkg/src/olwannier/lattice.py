"""Lattice geometry, potentials and the reciprocal-space mesh.

Units throughout the package: lengths in the laser wavelength (lambda = 1),
energies in the recoil energy E_R.  With hbar = mu = 1 internally one recoil
is ``RECOIL = 2 pi^2``, so the kinetic energy of a plane wave with wave vector
``q`` is ``|q|^2 / (4 pi^2)`` recoils.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import optimize

from .errors import DegenerateLatticeError, MeshGeometryError, PotentialError

RECOIL = 2.0 * np.pi**2
DEFAULT_CUTOFF = 50.0
DEFAULT_MESH = {1: 32, 2: 15}
PRESETS = ("sinusoidal_1d", "superlattice_1d", "hexagonal_2d", "kagome_2d")


def kinetic(q):
    """Free-particle energy in recoils for Cartesian wave vectors ``q`` (..., D)."""
    q = np.asarray(q, dtype=float)
    return np.sum(q * q, axis=-1) / (2.0 * RECOIL)


@dataclass(frozen=True)
class LatticeGeometry:
    """Direct and reciprocal Bravais lattice in D dimensions.

    ``direct`` and ``reciprocal`` hold the vectors as rows, so that
    ``direct @ reciprocal.T == 2 pi * identity``.
    """

    direct: np.ndarray
    reciprocal: np.ndarray
    volume: float

    @property
    def dimension(self) -> int:
        return self.direct.shape[0]

    def to_cartesian(self, frac):
        """Direct-lattice fractional coordinates to Cartesian positions."""
        return np.asarray(frac, dtype=float) @ self.direct

    def to_fractional(self, r):
        return np.asarray(r, dtype=float) @ self.reciprocal.T / (2.0 * np.pi)

    def reciprocal_cartesian(self, coords):
        """Integer (or fractional) reciprocal coordinates to Cartesian wave vectors."""
        return np.asarray(coords, dtype=float) @ self.reciprocal

    def wrap(self, r):
        """Wrap Cartesian positions into the home cell (fractional coords in [0, 1))."""
        frac = self.to_fractional(r)
        frac = frac - np.floor(frac + 1e-12)
        return self.to_cartesian(frac)

    def lattice_residue(self, dr):
        """Distance from ``dr`` to the nearest direct lattice vector."""
        frac = self.to_fractional(dr)
        frac = frac - np.round(frac)
        best = np.inf
        for shift in itertools.product((-1, 0, 1), repeat=self.dimension):
            d = np.linalg.norm(self.to_cartesian(frac + np.array(shift)), axis=-1)
            best = np.minimum(best, d)
        return best


def build_geometry(dimension: int, lattice_vectors) -> LatticeGeometry:
    """Construct the reciprocal lattice for the given direct vectors (rows)."""
    a = np.array(lattice_vectors, dtype=float).reshape(dimension, -1)
    if a.shape != (dimension, dimension):
        raise DegenerateLatticeError(
            f"expected {dimension} vectors of length {dimension}, got shape {a.shape}"
        )
    det = np.linalg.det(a)
    scale = np.prod(np.linalg.norm(a, axis=1))
    if scale == 0.0 or abs(det) < 1e-12 * scale:
        raise DegenerateLatticeError("lattice vectors are linearly dependent", vectors=a)
    g = 2.0 * np.pi * np.linalg.inv(a).T
    a.setflags(write=False)
    g.setflags(write=False)
    return LatticeGeometry(direct=a, reciprocal=g, volume=float(abs(det)))


@dataclass(frozen=True)
class PotentialSpec:
    """Finite Fourier expansion of a periodic potential.

    ``coefficients`` maps integer reciprocal coordinates ``G`` (in the basis of
    the reciprocal vectors) to the plain Fourier coefficient ``V_G`` in recoils,
    ``V(r) = sum_G V_G exp(i G.r)``.  The amplitude normalised per unit cell
    volume is ``sqrt(volume) * V_G`` (see :meth:`cell_amplitude`).
    """

    geometry: LatticeGeometry
    coefficients: Mapping[tuple, complex]
    has_time_reversal: bool = True
    has_inversion: bool = True
    depth: float = 0.0
    shape: float | None = None
    name: str = "custom"

    def __post_init__(self):
        d = self.geometry.dimension
        clean = {}
        for key, value in self.coefficients.items():
            key = tuple(int(x) for x in key)
            if len(key) != d:
                raise PotentialError(f"component {key} does not have {d} coordinates")
            clean[key] = complex(value)
        object.__setattr__(self, "coefficients", clean)
        self.check()

    def check(self, tol=1e-12):
        scale = max([abs(v) for v in self.coefficients.values()] + [1.0])
        for key, value in self.coefficients.items():
            minus = tuple(-x for x in key)
            partner = self.coefficients.get(minus, 0.0)
            if abs(partner - np.conj(value)) > tol * scale:
                raise PotentialError(
                    "potential is not real: V(-G) != conj(V(G))", G=key, value=str(value)
                )
            if self.has_inversion and abs(partner - value) > tol * scale:
                raise PotentialError("inversion flag set but V(-G) != V(G)", G=key)

    def cell_amplitude(self, key) -> complex:
        return np.sqrt(self.geometry.volume) * self.coefficients.get(tuple(key), 0.0)

    def is_real(self) -> bool:
        return all(abs(v.imag) == 0.0 for v in self.coefficients.values())

    def max_kinetic(self) -> float:
        if not self.coefficients:
            return 0.0
        keys = np.array(list(self.coefficients), dtype=float)
        return float(kinetic(self.geometry.reciprocal_cartesian(keys)).max())

    def evaluate(self, r):
        """Potential in recoils at Cartesian points ``r`` of shape (..., D)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape[:-1], dtype=complex)
        for key, value in sorted(self.coefficients.items()):
            gvec = self.geometry.reciprocal_cartesian(key)
            out += value * np.exp(1j * (r @ gvec))
        return out.real

    def shifted(self, dr) -> "PotentialSpec":
        """The potential translated by ``dr``: V'(r) = V(r - dr)."""
        dr = np.asarray(dr, dtype=float)
        coeffs = {}
        for key, value in self.coefficients.items():
            gvec = self.geometry.reciprocal_cartesian(key)
            coeffs[key] = value * np.exp(-1j * float(gvec @ dr))
        frac = self.geometry.to_fractional(2.0 * dr)
        keeps_inversion = self.has_inversion and np.allclose(frac, np.round(frac), atol=1e-12)
        return PotentialSpec(
            self.geometry,
            coeffs,
            has_time_reversal=self.has_time_reversal,
            has_inversion=keeps_inversion,
            depth=self.depth,
            shape=self.shape,
            name=self.name,
        )


def sample_grid(geometry: LatticeGeometry, n: int):
    """Uniform grid of ``n`` points per direction over one primitive cell."""
    axes = [np.arange(n) / n] * geometry.dimension
    frac = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return geometry.to_cartesian(frac)


def _hexagonal_geometry(scale=1.0):
    # reciprocal vectors pi*(3, sqrt3) and pi*(-3, sqrt3), scaled
    g = scale * np.pi * np.array([[3.0, np.sqrt(3.0)], [-3.0, np.sqrt(3.0)]])
    a = 2.0 * np.pi * np.linalg.inv(g).T
    return build_geometry(2, a)


def _kagome_extrema():
    """Exact min and max of the unscaled Kagome form over one cell."""

    def f(theta):
        t1, t2 = theta
        t3 = t1 + t2
        return sum(np.cos(t) - np.cos(2 * t) for t in (t1, t2, t3))

    def grad(theta):
        t1, t2 = theta
        t3 = t1 + t2
        d3 = -np.sin(t3) + 2 * np.sin(2 * t3)
        return np.array(
            [-np.sin(t1) + 2 * np.sin(2 * t1) + d3, -np.sin(t2) + 2 * np.sin(2 * t2) + d3]
        )

    grid = np.linspace(0.0, 2 * np.pi, 241)[:-1]
    t1, t2 = np.meshgrid(grid, grid, indexing="ij")
    values = f((t1, t2))
    out = []
    for sign in (1.0, -1.0):
        i = np.unravel_index(np.argmin(sign * values), values.shape)
        res = optimize.minimize(
            lambda th: sign * f(th),
            np.array([t1[i], t2[i]]),
            jac=lambda th: sign * grad(th),
            method="BFGS",
            options={"gtol": 1e-14},
        )
        out.append(float(f(res.x)))
    return out[0], out[1]


def preset_potential(name: str, V0: float, s: float | None = None) -> PotentialSpec:
    """Named optical-lattice potentials of depth ``V0`` (recoils).

    ``sinusoidal_1d``    V0 sin^2(2 pi x)
    ``superlattice_1d``  V0 [(1-s) sin^2(2 pi x) + s sin^2(4 pi x)], 0 <= s < 1
    ``hexagonal_2d``     V0/9 [3 + 2 cos(2 sqrt3 pi y) + 4 cos(3 pi x) cos(sqrt3 pi y)]
    ``kagome_2d``        three-minimum lattice rescaled to span exactly [0, V0]
    """
    if name not in PRESETS:
        raise PotentialError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if V0 < 0:
        raise PotentialError("lattice depth V0 must be non-negative", V0=V0)
    if name == "superlattice_1d":
        if s is None:
            s = 0.0
        if not 0.0 <= s < 1.0:
            raise PotentialError("superlattice parameter must satisfy 0 <= s < 1", s=s)
    elif s is not None:
        raise PotentialError(f"preset {name!r} takes no superlattice parameter", s=s)

    if name in ("sinusoidal_1d", "superlattice_1d"):
        geometry = build_geometry(1, [[0.5]])
        s_eff = s if name == "superlattice_1d" else 0.0
        coeffs = {
            (0,): V0 / 2.0,
            (1,): -V0 * (1.0 - s_eff) / 4.0,
            (-1,): -V0 * (1.0 - s_eff) / 4.0,
        }
        if s_eff:
            coeffs[(2,)] = coeffs[(-2,)] = -V0 * s_eff / 4.0
    elif name == "hexagonal_2d":
        geometry = _hexagonal_geometry()
        coeffs = {(0, 0): V0 / 3.0}
        for key in ((1, 0), (0, 1), (1, 1)):
            coeffs[key] = coeffs[tuple(-x for x in key)] = V0 / 9.0
    else:
        geometry = _hexagonal_geometry(0.5)
        fmin, fmax = _kagome_extrema()
        scale = V0 / (fmax - fmin)
        coeffs = {(0, 0): -fmin * scale}
        for key in ((1, 0), (0, 1), (1, 1)):
            big = tuple(2 * x for x in key)
            coeffs[key] = coeffs[tuple(-x for x in key)] = 0.5 * scale
            coeffs[big] = coeffs[tuple(-x for x in big)] = -0.5 * scale
    return PotentialSpec(
        geometry,
        coeffs,
        has_time_reversal=True,
        has_inversion=True,
        depth=float(V0),
        shape=s if name == "superlattice_1d" else None,
        name=name,
    )


@dataclass(frozen=True)
class KMesh:
    """Uniform M^D mesh over one primitive reciprocal cell.

    The cell is centred on Gamma: mesh point ``i`` sits at integer coordinates
    ``points[i]`` (-M//2 <= c < M - M//2) and Cartesian wave vector
    ``kvecs[i] = points[i] @ reciprocal / M``.  Point indices follow C order of
    the coordinates taken modulo M.  For every
    neighbour vector ``bvecs[j]`` (integer offsets ``offsets[j]``),
    ``neighbors[i, j]`` is the mesh index of ``k + b`` after folding, and
    ``wraps[i, j]`` the reciprocal lattice vector removed by the fold
    (``k + b = k[neighbors] + G_wrap``).
    """

    geometry: LatticeGeometry
    size: int
    cutoff: float
    points: np.ndarray
    kvecs: np.ndarray
    offsets: np.ndarray
    bvecs: np.ndarray
    weights: np.ndarray
    neighbors: np.ndarray
    wraps: np.ndarray
    gvectors: np.ndarray
    gcart: np.ndarray
    _gindex: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def nk(self) -> int:
        return self.points.shape[0]

    @property
    def nb(self) -> int:
        return self.bvecs.shape[0]

    @property
    def npw(self) -> int:
        return self.gvectors.shape[0]

    @property
    def gmax(self) -> float:
        return 2.0 * np.pi * np.sqrt(self.cutoff)

    def index_of(self, coords) -> int:
        coords = np.mod(np.asarray(coords, dtype=int), self.size)
        return int(np.ravel_multi_index(tuple(coords), (self.size,) * self.geometry.dimension))

    def g_index(self, key):
        """Position of integer reciprocal vector ``key`` in the plane-wave set, or -1."""
        return self._gindex.get(tuple(int(x) for x in key), -1)

    def opposite(self) -> np.ndarray:
        """For each neighbour vector ``b`` the index of ``-b``."""
        out = np.empty(self.nb, dtype=int)
        for j, off in enumerate(self.offsets):
            out[j] = int(np.flatnonzero((self.offsets == -off).all(axis=1))[0])
        return out

    def completeness_residual(self) -> float:
        t = np.einsum("b,bi,bj->ij", self.weights, self.bvecs, self.bvecs)
        return float(np.abs(t - np.eye(self.geometry.dimension)).max())


def _candidate_shells(geometry, size, reach=3, tol=1e-8):
    d = geometry.dimension
    step = geometry.reciprocal / size
    offsets = np.array(
        [o for o in itertools.product(range(-reach, reach + 1), repeat=d) if any(o)], dtype=int
    )
    lengths = np.linalg.norm(offsets @ step, axis=1)
    order = np.lexsort((*offsets.T[::-1], lengths))
    offsets, lengths = offsets[order], lengths[order]
    shells, current, ref = [], [], None
    for off, length in zip(offsets, lengths):
        if ref is not None and abs(length - ref) > tol * ref:
            shells.append(np.array(current))
            current = []
        if not current:
            ref = length
        current.append(off)
    shells.append(np.array(current))
    return shells


def _solve_weights(shells, step, tol=1e-8):
    d = step.shape[0]
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    rhs = np.array([1.0 if i == j else 0.0 for i, j in pairs])
    chosen = []
    for shell in shells:
        chosen.append(shell)
        amat = np.empty((len(pairs), len(chosen)))
        for c, sh in enumerate(chosen):
            b = sh @ step
            amat[:, c] = [np.sum(b[:, i] * b[:, j]) for i, j in pairs]
        w, *_ = np.linalg.lstsq(amat, rhs, rcond=None)
        resid = np.abs(amat @ w - rhs).max()
        if resid < tol and np.all(w > 0):
            return chosen, w
        if len(chosen) >= 6:
            break
    raise MeshGeometryError("no set of neighbour shells satisfies the completeness relation")


def build_kmesh(geometry: LatticeGeometry, M: int | None = None, E_cutoff: float = DEFAULT_CUTOFF) -> KMesh:
    """Mesh, finite-difference neighbours and truncated plane-wave basis.

    Neighbour shells are added in order of increasing length until the
    completeness relation ``sum_b w_b b_a b_b = delta_ab`` is solvable with
    positive weights.
    """
    d = geometry.dimension
    if M is None:
        M = DEFAULT_MESH.get(d, 8)
    if M < 4:
        raise MeshGeometryError("mesh size must be at least 4", M=M)
    if E_cutoff <= 0:
        raise MeshGeometryError("cutoff energy must be positive", E_cutoff=E_cutoff)

    half = M - M // 2
    raw = np.array(list(itertools.product(range(M), repeat=d)), dtype=int)
    points = np.where(raw < half, raw, raw - M)
    kvecs = points @ geometry.reciprocal / M

    step = geometry.reciprocal / M
    shells, shell_weights = _solve_weights(_candidate_shells(geometry, M), step)
    offsets = np.concatenate(shells)
    weights = np.concatenate([np.full(len(sh), w) for sh, w in zip(shells, shell_weights)])
    bvecs = offsets @ step

    shifted = points[:, None, :] + offsets[None, :, :]
    folded = np.mod(shifted + M // 2, M) - M // 2
    wraps = (shifted - folded) // M
    neighbors = np.ravel_multi_index(tuple(np.moveaxis(np.mod(folded, M), -1, 0)), (M,) * d)

    gmax = 2.0 * np.pi * np.sqrt(E_cutoff)
    gnorm_min = np.min(np.linalg.svd(geometry.reciprocal, compute_uv=False))
    reach = int(np.ceil(gmax / gnorm_min)) + 1
    cands = np.array(list(itertools.product(range(-reach, reach + 1), repeat=d)), dtype=int)
    norms = np.linalg.norm(cands @ geometry.reciprocal, axis=1)
    keep = norms < gmax
    cands, norms = cands[keep], norms[keep]
    order = np.lexsort((*cands.T[::-1], np.round(norms, 10)))
    gvectors = cands[order]
    if gvectors.shape[0] == 0:
        raise MeshGeometryError("plane-wave set is empty; raise the cutoff", E_cutoff=E_cutoff)
    gcart = gvectors @ geometry.reciprocal
    gindex = {tuple(int(x) for x in g): i for i, g in enumerate(gvectors)}

    arrays = [points, kvecs, offsets, bvecs, weights, neighbors, wraps, gvectors, gcart]
    for arr in arrays:
        arr.setflags(write=False)
    return KMesh(
        geometry=geometry,
        size=M,
        cutoff=float(E_cutoff),
        points=points,
        kvecs=kvecs,
        offsets=offsets,
        bvecs=bvecs,
        weights=weights,
        neighbors=neighbors,
        wraps=wraps,
        gvectors=gvectors,
        gcart=gcart,
        _gindex=gindex,
    )
