"""Reduction of the band-off-diagonal spread by successive band extraction."""

from __future__ import annotations

import numpy as np

from ..errors import InstabilityError
from .overlaps import OverlapSet, dagger

SWEEP_TOL = 1e-9
MAX_SWEEPS = 5000
MIXING = 0.5
RESTARTS = 8
# extractions whose final band spread agrees within this are the same optimum
SAME_OPTIMUM = 1e-7


def random_permutations(rng, nk: int, J: int, first: int = 0) -> np.ndarray:
    """Identity matrices whose rows ``first..J-1`` are randomly permuted at each k."""
    out = np.broadcast_to(np.eye(J, dtype=complex), (nk, J, J)).copy()
    block = np.eye(J - first, dtype=complex)
    for k in range(nk):
        out[k, first:, first:] = block[rng.permutation(J - first)]
    return out


def band_spread_id(overlaps: OverlapSet, n: int) -> float:
    mesh = overlaps.mesh
    diag = np.abs(overlaps.matrices[:, :, n, n]) ** 2
    return float(np.einsum("b,kb->", mesh.weights, 1.0 - diag) / mesh.nk)


def extract_band(overlaps: OverlapSet, n: int, tol=SWEEP_TOL, max_iter=MAX_SWEEPS):
    """Make band ``n`` as smooth as possible using bands ``n..J-1`` only.

    At each k the matrix Z_mp = sum_b w_b M_mn M_pn^* (m, p >= n) is
    diagonalised and band ``n`` rotated onto its leading eigenvector.  The Z
    used is the mean of this sweep's Z and the previous sweep's Z (the latter
    expressed in the current basis), which damps oscillations without moving
    the fixed points.  Returns the updated overlaps and the trace of the
    band's gauge-invariant diagonal spread.
    """
    mesh = overlaps.mesh
    J = overlaps.J
    w = mesh.weights
    current = overlaps
    trace = [band_spread_id(current, n)]
    previous = None
    for _ in range(max_iter):
        col = current.matrices[:, :, n:, n]
        fresh = np.einsum("b,kbm,kbp->kmp", w, col, np.conj(col))
        z = fresh if previous is None else MIXING * fresh + (1.0 - MIXING) * previous
        z = 0.5 * (z + dagger(z))
        _, vecs = np.linalg.eigh(z)
        x = vecs[:, :, ::-1]
        v = np.broadcast_to(np.eye(J, dtype=complex), (mesh.nk, J, J)).copy()
        v[:, n:, n:] = x
        current = current.transform(v)
        previous = dagger(x) @ fresh @ x
        trace.append(band_spread_id(current, n))
        if abs(trace[-1] - trace[-2]) < tol:
            return current, trace
    raise InstabilityError("band extraction did not settle", band=n, trace=trace[-50:])


def _score(overlaps: OverlapSet, n: int) -> float:
    """Selection score after extracting band ``n``.

    For the last extraction every band is fixed, so the total diagonal spread
    (which tracks the total spread once phases are smoothed) is used; before
    that only the band just extracted is meaningful.
    """
    J = overlaps.J
    bands = range(n, J) if n == J - 2 else (n,)
    return sum(band_spread_id(overlaps, m) for m in bands)


def reduce_interband(overlaps: OverlapSet, rand_seed=None, tol=SWEEP_TOL,
                     max_iter=MAX_SWEEPS, restarts=RESTARTS):
    """Extract bands 0..J-2 in turn, each from several starting orders.

    For band ``n`` the candidates are the current order plus ``restarts``
    random permutations of the trailing bands ``n..J-1`` at every k.  Each
    candidate is swept to convergence and the smoothest result kept, since
    a single start can settle on a secondary fixed point.  Candidates that do
    not settle within ``max_iter`` sweeps are dropped.  Returns the new
    overlaps and, per band, the convergence trace of the retained start.
    """
    J = overlaps.J
    nk = overlaps.mesh.nk
    rng = np.random.default_rng(rand_seed)
    current = overlaps
    traces = []
    for n in range(J - 1):
        best, best_score, failures = None, np.inf, []
        starts = [None] + [random_permutations(rng, nk, J, n) for _ in range(max(0, restarts))]
        for perm in starts:
            start = current if perm is None else current.transform(perm)
            try:
                result, trace = extract_band(start, n, tol, max_iter)
            except InstabilityError as exc:
                failures.append(exc.context.get("trace", [])[-1:])
                continue
            score = _score(result, n)
            if score < best_score - SAME_OPTIMUM:
                best, best_score = (result, trace), score
        if best is None:
            raise InstabilityError(
                "band extraction did not settle from any start", band=n, final=failures
            )
        current = best[0]
        traces.append(best[1])
    return current.refreshed(), traces
