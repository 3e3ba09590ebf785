"""Progressive phase smoothing of each band along straight mesh loops."""

from __future__ import annotations

import numpy as np

from ..errors import MeshGeometryError
from .overlaps import OverlapSet
from .spread import diagonal_phases


def _wrap_angle(x):
    return np.angle(np.exp(1j * x))


def _continuous_berry(theta, axis, M):
    """Fold loop Berry phases, shape (n_loops, J), choosing branches continuously.

    Loops are ordered by their start point; neighbouring loops get Berry
    phases on the same branch so a band whose hybrid centre sits at half a
    cell does not flip between +pi and -pi from one loop to the next.
    """
    theta = _wrap_angle(theta)
    if axis == 0:
        return theta
    grid = theta.reshape((M,) * axis + (theta.shape[-1],))
    for ax in range(axis):
        grid = np.unwrap(grid, axis=ax)
    return grid.reshape(theta.shape)


def direction_index(mesh, axis: int) -> int:
    """Neighbour index of the unit mesh step along reciprocal axis ``axis``."""
    unit = np.zeros(mesh.geometry.dimension, dtype=int)
    unit[axis] = 1
    hit = np.flatnonzero((mesh.offsets == unit).all(axis=1))
    if hit.size == 0:
        raise MeshGeometryError(
            "neighbour shells do not contain the mesh step along a reciprocal axis", axis=axis
        )
    return int(hit[0])


def loops(mesh, axis: int):
    """Mesh loops processed for ``axis``: array (n_loops, M) of point indices.

    Lines along ``axis`` through every point whose coordinates beyond
    ``axis`` are zero.  Their start points lie on lines handled earlier and
    are never re-phased, so loops already smoothed stay smooth.
    """
    d = mesh.geometry.dimension
    M = mesh.size
    free = [range(M) if i < axis else [0] for i in range(d)]
    out = []
    for start in np.stack(np.meshgrid(*free, indexing="ij"), axis=-1).reshape(-1, d):
        coords = np.repeat(start[None, :], M, axis=0)
        coords[:, axis] = np.arange(M)
        out.append(np.ravel_multi_index(tuple(coords.T), (M,) * d))
    return np.array(out)


def loop_berry_phases(overlaps: OverlapSet, axis: int):
    """Berry phase -sum Im ln M_nn around each processed loop, shape (n_loops, J)."""
    b = direction_index(overlaps.mesh, axis)
    phases = diagonal_phases(overlaps)[:, b, :]
    return -phases[loops(overlaps.mesh, axis)].sum(axis=1)


def phase_update(overlaps: OverlapSet) -> OverlapSet:
    """Re-phase every band so that Im ln M_nn is uniform along each loop.

    Loops run along reciprocal axis 0 through the origin, then along axis 1
    from every point of that line, and so on.  Along a loop with Berry phase
    theta every link ends up with Im ln M_nn = -theta/M; theta is folded into
    (-pi, pi] for the first loop and kept continuous across neighbouring
    loops.  The Berry phase itself is untouched.  Only diagonal gauge
    changes are made, so the off-diagonal spread is unchanged.
    """
    mesh = overlaps.mesh
    M = mesh.size
    current = overlaps
    for axis in range(mesh.geometry.dimension):
        b = direction_index(mesh, axis)
        paths = loops(mesh, axis)
        phases = diagonal_phases(current)[:, b, :][paths]  # (n_loops, M, J)
        target = _continuous_berry(phases.sum(axis=1), axis, M) / M
        alpha = np.zeros_like(phases)
        alpha[:, 1:] = np.cumsum(target[:, None, :] - phases[:, :-1], axis=1)
        shift = np.zeros((mesh.nk, current.J))
        shift[paths.ravel()] = alpha.reshape(-1, current.J)
        v = np.zeros((mesh.nk, current.J, current.J), dtype=complex)
        idx = np.arange(current.J)
        v[:, idx, idx] = np.exp(1j * shift)
        current = current.transform(v)
    return current
