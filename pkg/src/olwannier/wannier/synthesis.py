"""Real-space Wannier functions by Fourier synthesis of the gauge-rotated Bloch states."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..bloch import BlochSolution
from ..errors import AliasingError, ResolutionError
from .overlaps import GaugeField

MIN_SUPERCELL = 3


def _band_amplitudes(bloch: BlochSolution, gauge: GaugeField, n: int) -> np.ndarray:
    """sum_m c_m(k, G) U_mn(k), shape (nk, npw)."""
    J = gauge.J
    return np.einsum("kgm,km->kg", bloch.coefficients[:, :, :J], gauge.matrices[:, :, n])


def _needed_points(bloch: BlochSolution) -> int:
    reach = int(np.abs(bloch.mesh.gvectors).max())
    return 2 * reach + 2


def _align_phase(values):
    """Global phase making ``values`` as real as possible (least squares), peak positive."""
    phase = np.exp(-0.5j * np.angle(np.sum(values * values)))
    aligned = values * phase
    peak = np.unravel_index(np.argmax(np.abs(aligned)), aligned.shape)
    if aligned[peak].real < 0:
        phase = -phase
    return phase


@dataclass(frozen=True)
class WannierFunction:
    """Samples of w^n_R on a uniform grid covering ``supercell`` cells per direction.

    ``values[j1, j2, ...]`` is the amplitude (units lambda^(-D/2)) at
    fractional position ``origin + j / points_per_cell``.  A global phase has
    been applied so that the function is as real as possible.
    """

    band: int
    cell: tuple
    geometry: object
    supercell: int
    points_per_cell: int
    origin: np.ndarray
    values: np.ndarray
    phase: complex
    _qcart: np.ndarray = field(repr=False, compare=False, default=None)
    _amps: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def dimension(self) -> int:
        return self.geometry.dimension

    @property
    def volume_element(self) -> float:
        return self.geometry.volume / self.points_per_cell**self.dimension

    def fractional_axes(self):
        j = np.arange(self.supercell * self.points_per_cell) / self.points_per_cell
        return [o + j for o in self.origin]

    def positions(self) -> np.ndarray:
        """Cartesian sample positions, shape values.shape + (D,)."""
        grids = np.meshgrid(*self.fractional_axes(), indexing="ij")
        return self.geometry.to_cartesian(np.stack(grids, axis=-1))

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def norm(self) -> float:
        return float(self.density().sum() * self.volume_element)

    def center(self) -> np.ndarray:
        rho = (self.density() * self.volume_element).reshape(-1)
        return rho @ self.positions().reshape(-1, self.dimension)

    def spread(self) -> float:
        """Variance <r^2> - <r>^2 from the samples (length^2)."""
        rho = (self.density() * self.volume_element).reshape(-1)
        pos = self.positions().reshape(-1, self.dimension)
        c = rho @ pos
        return float(rho @ np.sum(pos * pos, axis=1) - c @ c)

    def imag_fraction(self) -> float:
        return float(np.abs(self.values.imag).max() / np.abs(self.values).max())

    def evaluate(self, r) -> np.ndarray:
        """Amplitude at arbitrary Cartesian points ``r`` (..., D) by direct summation."""
        r = np.asarray(r, dtype=float)
        flat = r.reshape(-1, self.dimension)
        out = np.empty(flat.shape[0], dtype=complex)
        for start in range(0, flat.shape[0], 256):
            block = flat[start:start + 256]
            out[start:start + 256] = np.exp(1j * block @ self._qcart.T) @ self._amps
        return (out * self.phase).reshape(r.shape[:-1])

    def write_csv(self, path):
        pos = self.positions().reshape(-1, self.dimension)
        vals = self.values.reshape(-1)
        header = [f"r{i + 1}_lambda" for i in range(self.dimension)]
        header += ["re_w_lambda^-D/2", "im_w_lambda^-D/2"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for p, v in zip(pos, vals):
                writer.writerow([repr(float(x)) for x in p] + [repr(float(v.real)), repr(float(v.imag))])

    def write_heatmap(self, path):
        """Re w as a whitespace matrix (gnuplot ``matrix`` layout), first index along rows."""
        data = np.atleast_2d(self.values.real)
        if self.dimension == 1:
            data = data.T
        with open(path, "w") as fh:
            fh.write(f"# band {self.band} cell {list(self.cell)} origin {self.origin.tolist()} "
                     f"points_per_cell {self.points_per_cell}\n")
            np.savetxt(fh, data, fmt="%.12e")


def read_wannier_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    d = data.shape[1] - 2
    return data[:, :d], data[:, d] + 1j * data[:, d + 1]


def synthesize_wannier(
    bloch: BlochSolution,
    gauge: GaugeField,
    n: int,
    cell=None,
    supercell: int | None = None,
    points_per_cell: int | None = None,
) -> WannierFunction:
    """Wannier function w^n_R on a grid of ``supercell`` cells centred on cell ``R``.

    w^n_R(r) = 1/(N sqrt(v)) sum_k exp(-i k.R) sum_m U_mn(k) sum_G c_m(k, G) exp(i (k+G).r)

    with N mesh points and cell volume v, so the function is normalised over
    the N-cell periodic supercell implied by the mesh.  The supercell must
    span at least three cells and at most the mesh size per direction.
    """
    mesh = bloch.mesh
    geometry = mesh.geometry
    d = geometry.dimension
    M = mesh.size
    cell = tuple(int(c) for c in (cell if cell is not None else (0,) * d))
    if supercell is None:
        supercell = M
    if supercell < MIN_SUPERCELL:
        raise AliasingError("supercell must span at least three cells per direction", supercell=supercell)
    if supercell > M:
        raise AliasingError("supercell larger than the mesh period repeats the function", supercell=supercell, M=M)
    needed = _needed_points(bloch)
    if points_per_cell is None:
        points_per_cell = needed
    spacing = np.linalg.norm(geometry.direct, axis=1).max() / points_per_cell
    if spacing >= 1.0 / np.sqrt(mesh.cutoff):
        raise ResolutionError(
            "grid spacing is not finer than the shortest plane-wave period",
            spacing=spacing, limit=1.0 / np.sqrt(mesh.cutoff),
        )
    # FFT on a grid that is a multiple of the requested one and free of aliasing
    stride = int(np.ceil(needed / points_per_cell))
    nfft = stride * points_per_cell
    L = M * nfft

    amps = _band_amplitudes(bloch, gauge, n)
    R = geometry.to_cartesian(np.array(cell, dtype=float))
    amps = amps * np.exp(-1j * mesh.kvecs @ R)[:, None]
    Q = mesh.points[:, None, :] + M * mesh.gvectors[None, :, :]
    scale = 1.0 / (mesh.nk * np.sqrt(geometry.volume))
    grid = np.zeros((L,) * d, dtype=complex)
    np.add.at(grid, tuple(np.mod(Q, L).reshape(-1, d).T), amps.reshape(-1))
    full = np.fft.ifftn(grid) * (L**d * scale)

    first = np.array(cell) - supercell // 2
    idx = [np.mod(f * nfft + np.arange(0, supercell * nfft, stride), L) for f in first]
    values = full[np.ix_(*idx)]
    phase = _align_phase(values)
    values = values * phase
    values.setflags(write=False)
    qcart = (Q.reshape(-1, d) @ geometry.reciprocal) / M
    return WannierFunction(
        band=n,
        cell=cell,
        geometry=geometry,
        supercell=int(supercell),
        points_per_cell=int(points_per_cell),
        origin=first.astype(float),
        values=values,
        phase=complex(phase),
        _qcart=qcart,
        _amps=amps.reshape(-1) * scale,
    )


def align_phases(bloch: BlochSolution, gauge: GaugeField, supercell: int = 5) -> GaugeField:
    """Multiply each gauge column by the global phase that makes w^n_0 real.

    The spread and every gauge-invariant quantity are unchanged; hopping
    parameters between real Wannier functions come out real.
    """
    supercell = max(MIN_SUPERCELL, min(supercell, bloch.mesh.size))
    phases = np.array([
        synthesize_wannier(bloch, gauge, n, None, supercell).phase for n in range(gauge.J)
    ])
    return GaugeField(gauge.matrices * phases[None, None, :])


def synthesize_all(bloch: BlochSolution, gauge: GaugeField, supercell=None, points_per_cell=None):
    return [
        synthesize_wannier(bloch, gauge, n, None, supercell, points_per_cell)
        for n in range(gauge.J)
    ]
