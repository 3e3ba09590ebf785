"""Independent reference calculations used only by the tests."""

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

RECOIL = 2.0 * np.pi**2


def fd_bloch_energies(potential_fn, period, k, n_points=4096, n_bands=2):
    """Lowest Bloch energies (recoils) from a 4th-order finite-difference grid on one period.

    Solves -(1/2 RECOIL) psi'' + V psi = E psi with psi(x + period) =
    exp(i k period) psi(x).  The twist enters through the wrapped stencil
    entries, so the operator stays hermitian.
    """
    h = period / n_points
    x = np.arange(n_points) * h
    twist = np.exp(1j * k * period)
    # -(1/12)(f[i-2] + f[i+2]) + (4/3)(f[i-1] + f[i+1]) - (5/2) f[i]
    stencil = {-2: -1.0 / 12.0, -1: 4.0 / 3.0, 1: 4.0 / 3.0, 2: -1.0 / 12.0}
    rows, cols, vals = [], [], []
    idx = np.arange(n_points)
    for off, c in stencil.items():
        j = idx + off
        phase = np.where(j >= n_points, twist, np.where(j < 0, np.conj(twist), 1.0))
        rows.append(idx)
        cols.append(np.mod(j, n_points))
        vals.append(c * phase)
    lap = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_points, n_points)
    )
    lap = lap - 2.5 * sparse.identity(n_points)
    ham = -lap / (h * h * 2.0 * RECOIL) + sparse.diags(potential_fn(x))
    vals = eigsh(ham.tocsc(), k=n_bands, sigma=float(potential_fn(x).min()) - 1.0,
                 which="LM", return_eigenvectors=False)
    return np.sort(vals.real)


def dense_potential_range(potential, n=801):
    """max V - min V over a dense grid of one primitive cell."""
    from olwannier.lattice import sample_grid

    values = potential.evaluate(sample_grid(potential.geometry, n))
    return float(values.max() - values.min())
