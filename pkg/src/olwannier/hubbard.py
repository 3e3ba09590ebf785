"""Hubbard parameters from a localised gauge, truncation and tight-binding validation."""

from __future__ import annotations

import csv
import itertools
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .bloch import BlochSolution
from .errors import AliasingError, ConfigError, EmptyModelError, ResolutionError
from .wannier.overlaps import GaugeField
from .wannier.pipeline import LocalizationResult, PipelineOptions, ordinary_gauge
from .wannier.synthesis import synthesize_wannier

RANK_TOL = 1e-4
RESOLUTION_TOL = 0.01
TAIL_TOL = 1e-6


class TailWarning(UserWarning):
    pass


def cell_range(d: int, reach: int, M: int | None = None) -> np.ndarray:
    """All integer cells with |components| <= reach, in lexicographic order."""
    if M is not None and reach > M // 2:
        raise AliasingError("hopping range exceeds half the mesh size", reach=reach, M=M)
    return np.array(list(itertools.product(range(-reach, reach + 1), repeat=d)), dtype=int)


def _alias_weights(cells, M):
    """1/2 per component sitting on the mesh boundary +-M/2 (even M), else 1."""
    if M % 2:
        return np.ones(len(cells))
    return np.prod(np.where(np.abs(cells) == M // 2, 0.5, 1.0), axis=1)


def distance_ranks(geometry, centers, cells, m, n, tol=RANK_TOL):
    """Distances |c_n + R - c_m| and their rank among all distinct distances."""
    shift = geometry.to_cartesian(cells.astype(float))
    dist = np.linalg.norm(centers[n] + shift - centers[m], axis=1)
    order = np.sort(dist)
    levels = [order[0]]
    for x in order[1:]:
        if x - levels[-1] > tol:
            levels.append(x)
    levels = np.array(levels)
    rank = np.searchsorted(levels, dist - tol, side="left")
    return dist, rank


@dataclass(frozen=True)
class TermTable:
    """Flat table of two-index parameters p^{mn}_{0,R} with metadata per row.

    For hopping ``value`` is t (complex, recoils); for interactions the
    density-density integral U^{mmnn}_{00RR} (real, recoils).  ``weight`` is
    below one only for cells on the aliasing boundary of an even mesh.
    """

    kind: str
    m: np.ndarray
    n: np.ndarray
    cells: np.ndarray
    rank: np.ndarray
    distance: np.ndarray
    value: np.ndarray
    weight: np.ndarray

    def __len__(self):
        return len(self.m)

    def select(self, mask) -> "TermTable":
        mask = np.asarray(mask, dtype=bool)
        return TermTable(self.kind, *(getattr(self, f)[mask] for f in
                                      ("m", "n", "cells", "rank", "distance", "value", "weight")))

    def lookup(self, m, n, cell):
        hit = (self.m == m) & (self.n == n) & (self.cells == np.asarray(cell)).all(axis=1)
        if not hit.any():
            raise KeyError((m, n, tuple(cell)))
        return self.value[np.flatnonzero(hit)[0]]

    def magnitude_at_rank(self, j) -> float:
        sel = np.abs(self.value[self.rank == j])
        return float(sel.max()) if sel.size else 0.0

    def rows(self):
        for i in range(len(self)):
            yield {
                "m": int(self.m[i]),
                "n": int(self.n[i]),
                "cell": [int(c) for c in self.cells[i]],
                "rank": int(self.rank[i]),
                "distance_lambda": float(self.distance[i]),
                "re": float(np.real(self.value[i])),
                "im": float(np.imag(self.value[i])),
                "weight": float(self.weight[i]),
            }

    def write_csv(self, path):
        d = self.cells.shape[1]
        sym = "t" if self.kind == "hopping" else "U"
        header = ["m", "n"] + [f"dR{i + 1}" for i in range(d)]
        header += ["rank_j", "distance_lambda", f"re_{sym}_ER", f"im_{sym}_ER", "weight"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in self.rows():
                writer.writerow([row["m"], row["n"], *row["cell"], row["rank"],
                                 repr(row["distance_lambda"]), repr(row["re"]), repr(row["im"]),
                                 repr(row["weight"])])


def read_table_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def _table(kind, geometry, centers, cells, weights, values, J, tol):
    """Flatten per-cell (J, J) arrays into a TermTable sorted by rank."""
    nc = len(cells)
    mm, nn = np.meshgrid(np.arange(J), np.arange(J), indexing="ij")
    m = np.tile(mm.reshape(-1), nc)
    n = np.tile(nn.reshape(-1), nc)
    rep = np.repeat(np.arange(nc), J * J)
    flat_cells = cells[rep]
    dist, rank = distance_ranks(geometry, centers, flat_cells, m, n, tol)
    order = np.lexsort((*flat_cells.T[::-1], n, m, rank))
    return TermTable(kind, m[order], n[order], flat_cells[order], rank[order], dist[order],
                     values.reshape(-1)[order], weights[rep][order])


def hopping_parameters(bloch: BlochSolution, gauge: GaugeField, centers, max_dR: int | None = None,
                       rank_tol=RANK_TOL) -> TermTable:
    """t^{mn}_{0,R} = -(1/N) sum_k exp(-i k.R) [U^+ diag(E) U]_mn for |R components| <= max_dR.

    ``centers`` are the Wannier centres of w^n_0 (not folded), used only to
    assign distance ranks.  The default range is the whole mesh supercell.
    """
    mesh = bloch.mesh
    J = gauge.J
    M = mesh.size
    d = mesh.geometry.dimension
    if max_dR is None:
        max_dR = M // 2
    cells = cell_range(d, max_dR, M)
    u = gauge.matrices
    hk = np.einsum("kim,ki,kin->kmn", np.conj(u), bloch.energies[:, :J], u)
    shift = mesh.geometry.to_cartesian(cells.astype(float))
    phase = np.exp(-1j * mesh.kvecs @ shift.T)  # (nk, ncells)
    t = -np.einsum("kc,kmn->cmn", phase, hk) / mesh.nk
    return _table("hopping", mesh.geometry, np.asarray(centers), cells, _alias_weights(cells, M), t, J, rank_tol)


@dataclass
class InteractionGrid:
    """Wannier functions w^n_0 on the full periodic supercell, ready for quadrature."""

    values: np.ndarray  # (J, L, L, ...)
    points_per_cell: int
    volume_element: float
    M: int

    def shifted(self, n, cell):
        """Samples of w^n_R, i.e. w^n_0 rolled by R."""
        shift = tuple(int(c) * self.points_per_cell for c in cell)
        return np.roll(self.values[n], shift, axis=tuple(range(len(shift))))

    def overlap_matrix(self):
        flat = self.values.reshape(self.values.shape[0], -1)
        return np.conj(flat) @ flat.T * self.volume_element

    def quartic(self, m, n, o, p, cells=None, g=1.0) -> complex:
        """g * int conj(w^m_R1) conj(w^n_R2) w^o_R3 w^p_R4 for cells = (R1, R2, R3, R4)."""
        d = self.values.ndim - 1
        cells = cells or [(0,) * d] * 4
        a, b, c, e = (self.shifted(x, r) for x, r in zip((m, n, o, p), cells))
        return complex(g * np.sum(np.conj(a) * np.conj(b) * c * e) * self.volume_element)


def interaction_grid(bloch, gauge, points_per_cell=None) -> InteractionGrid:
    """Synthesise all w^n_0 on the periodic supercell with exact quartic quadrature by default."""
    mesh = bloch.mesh
    if points_per_cell is None:
        reach = int(np.abs(mesh.gvectors).max())
        points_per_cell = 4 * reach + 4
    wfs = [synthesize_wannier(bloch, gauge, n, None, mesh.size, points_per_cell) for n in range(gauge.J)]
    # the grid starts at cell -M//2; roll so index 0 is the origin
    offset = tuple((mesh.size // 2) * points_per_cell for _ in range(mesh.geometry.dimension))
    vals = np.array([np.roll(w.values, offset, axis=tuple(range(len(offset)))) for w in wfs])
    return InteractionGrid(vals, points_per_cell, wfs[0].volume_element, mesh.size)


def _pair(a, b):
    """sum_r a_m(r) b_n(r) over all grid points, shape (J, J)."""
    return a.reshape(a.shape[0], -1) @ b.reshape(b.shape[0], -1).T


def _tail_ratio(values):
    """Largest amplitude on the supercell faces furthest from the origin over the peak."""
    L = values.shape[1]
    far = L // 2
    faces = [np.take(values, far, axis=ax + 1) for ax in range(values.ndim - 1)]
    return max(float(np.abs(f).max()) for f in faces) / float(np.abs(values).max())


def interaction_parameters(bloch: BlochSolution, gauge: GaugeField, centers, cells, g=1.0,
                           points_per_cell=None, rank_tol=RANK_TOL, check_resolution=True):
    """Density-density U^{mmnn}_{00RR} = g int |w^m_0|^2 |w^n_R|^2 for the given cells.

    ``g`` is in units of E_R lambda^D.  The quadrature is repeated on a grid
    with half the spacing; a relative change above 1% in any on-site value
    raises ``ResolutionError``.  Returns the table and an audit dict.
    """
    mesh = bloch.mesh
    J = gauge.J
    cells = np.asarray(cells, dtype=int)
    grid = interaction_grid(bloch, gauge, points_per_cell)
    dens = np.abs(grid.values) ** 2

    def dd(gr, dn):
        axes = tuple(range(1, dn.ndim))
        out = np.empty((len(cells), J, J))
        for c, cell in enumerate(cells):
            shift = tuple(int(x) * gr.points_per_cell for x in cell)
            rolled = np.roll(dn, shift, axis=axes)
            out[c] = g * _pair(dn, rolled) * gr.volume_element
        return out

    values = dd(grid, dens)
    audit = {
        "points_per_cell": grid.points_per_cell,
        "orthonormality_error": float(np.abs(grid.overlap_matrix() - np.eye(J)).max()),
        "tail_ratio": _tail_ratio(grid.values),
    }
    if audit["tail_ratio"] > TAIL_TOL:
        warnings.warn(
            f"Wannier tails reach {audit['tail_ratio']:.2g} of the peak at the supercell edge; "
            "interactions between distant cells may be affected",
            TailWarning,
        )
    if check_resolution:
        fine = interaction_grid(bloch, gauge, 2 * grid.points_per_cell)
        fine_dens = np.abs(fine.values) ** 2
        coarse_u = g * _pair(dens, dens) * grid.volume_element
        fine_u = g * _pair(fine_dens, fine_dens) * fine.volume_element
        rel = float(np.abs(fine_u - coarse_u).max() / np.abs(fine_u).max())
        audit["resolution_change"] = rel
        if rel > RESOLUTION_TOL:
            raise ResolutionError("interaction quadrature changes by more than 1% on grid refinement",
                                  change=rel, points_per_cell=grid.points_per_cell)
    table = _table("interaction", mesh.geometry, np.asarray(centers), cells,
                   np.ones(len(cells)), values.astype(complex), J, rank_tol)
    return table, audit


def parse_policy(policy: str):
    policy = policy.strip().lower()
    if policy in ("all", "full"):
        return "all", None
    if policy in ("nn", "nearest"):
        return "rank", 1
    kind, _, arg = policy.partition(":")
    if kind in ("rank", "cells") and arg.strip().lstrip("-").isdigit():
        return kind, int(arg)
    raise ConfigError(f"unknown retention policy {policy!r}; use all, nn, rank:<j> or cells:<r>")


def _keep(table: TermTable, kind, arg):
    if kind == "all":
        return np.ones(len(table), dtype=bool)
    if kind == "rank":
        return table.rank <= arg
    return np.abs(table.cells).max(axis=1) <= arg


@dataclass
class HubbardModel:
    """Local Hubbard model: retained hopping and interaction terms with metadata.

    Energies in recoils; ``g`` in units of g_ref = E_R lambda^D.
    """

    geometry: object
    J: int
    centers: np.ndarray
    hopping: TermTable
    interactions: TermTable | None
    g: float
    policy: str
    discarded_hopping: np.ndarray = field(default_factory=lambda: np.zeros(0))
    discarded_interactions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    extended_interactions: int = 0
    audit: dict = field(default_factory=dict)
    g_ref: str = "E_R lambda^D"

    def hamiltonian(self, kvecs) -> np.ndarray:
        """H_mn(k) = -sum_R w_R exp(i k.R) t^{mn}_{0R}, shape (nk, J, J)."""
        kvecs = np.atleast_2d(np.asarray(kvecs, dtype=float))
        h = self.hopping
        shift = self.geometry.to_cartesian(h.cells.astype(float))
        phase = np.exp(1j * kvecs @ shift.T) * (h.weight * h.value)[None, :]
        out = np.zeros((kvecs.shape[0], self.J * self.J), dtype=complex)
        idx = h.m * self.J + h.n
        for col in np.unique(idx):
            out[:, col] = -phase[:, idx == col].sum(axis=1)
        return out.reshape(-1, self.J, self.J)

    def bands(self, kvecs) -> np.ndarray:
        h = self.hamiltonian(kvecs)
        return np.linalg.eigvalsh(0.5 * (h + np.conj(np.swapaxes(h, 1, 2))))

    def hermiticity_error(self) -> float:
        h = self.hopping
        worst = 0.0
        for i in range(len(h)):
            try:
                other = h.lookup(h.n[i], h.m[i], -h.cells[i])
            except KeyError:
                continue
            worst = max(worst, abs(h.value[i] - np.conj(other)))
        return worst

    def neighbours(self, m: int, rank: int = 1):
        h = self.hopping
        sel = (h.m == m) & (h.rank == rank)
        return [(int(n), tuple(int(x) for x in c)) for n, c in zip(h.n[sel], h.cells[sel])]

    def to_dict(self):
        out = {
            "J": self.J,
            "dimension": self.geometry.dimension,
            "lattice_vectors_lambda": self.geometry.direct.tolist(),
            "centers_lambda": np.asarray(self.centers).tolist(),
            "policy": self.policy,
            "g": self.g,
            "g_unit": self.g_ref,
            "energy_unit": "E_R",
            "hopping": list(self.hopping.rows()),
            "interactions": list(self.interactions.rows()) if self.interactions is not None else [],
            "discarded_hopping_max": float(self.discarded_hopping.max(initial=0.0)),
            "discarded_interaction_max": float(self.discarded_interactions.max(initial=0.0)),
            "interactions_kept_by_discard_rule": self.extended_interactions,
            "audit": self.audit,
        }
        return out

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    def write_csv(self, hopping_path, interaction_path=None):
        self.hopping.write_csv(hopping_path)
        if interaction_path is not None and self.interactions is not None:
            self.interactions.write_csv(interaction_path)


def truncate_model(geometry, J, centers, hopping: TermTable, interactions: TermTable | None,
                   policy: str = "nn", g: float = 1.0, audit=None) -> HubbardModel:
    """Keep terms selected by ``policy`` (``all``, ``nn``, ``rank:<j>``, ``cells:<r>``).

    Interactions outside the policy are still kept when larger than every
    discarded hopping magnitude, so no discarded interaction exceeds the
    discarded hoppings.  ``interactions`` must already be scaled by ``g``.
    """
    kind, arg = parse_policy(policy)
    keep_t = _keep(hopping, kind, arg)
    if not keep_t.any():
        raise EmptyModelError("retention policy keeps no hopping terms", policy=policy)
    dropped_t = np.abs(hopping.value[~keep_t])
    bound = float(dropped_t.max(initial=0.0))
    kept_u = dropped_u = None
    extended = 0
    if interactions is not None:
        inside = _keep(interactions, kind, arg)
        big = np.abs(interactions.value) > bound
        keep_u = inside | big
        extended = int((keep_u & ~inside).sum())
        kept_u = interactions.select(keep_u)
        dropped_u = np.abs(interactions.value[~keep_u])
    return HubbardModel(
        geometry=geometry,
        J=J,
        centers=np.asarray(centers),
        hopping=hopping.select(keep_t),
        interactions=kept_u,
        g=float(g),
        policy=policy,
        discarded_hopping=dropped_t,
        discarded_interactions=dropped_u if dropped_u is not None else np.zeros(0),
        extended_interactions=extended,
        audit=dict(audit or {}),
    )


@dataclass(frozen=True)
class ValidationReport:
    """Per-band RMS error between exact and interpolated bands (recoils).

    ``sigma`` averages the per-band RMS values over the bands;
    ``sigma_pooled`` is the RMS over all bands and mesh points together.
    """

    sigma_bands: np.ndarray
    sigma: float
    sigma_pooled: float
    max_error: float
    policy: str
    discarded_hopping_max: float
    discarded_interaction_max: float
    discarded_hopping: np.ndarray
    discarded_interactions: np.ndarray

    def to_dict(self):
        return {
            "sigma_ER": self.sigma,
            "sigma_bands_ER": self.sigma_bands.tolist(),
            "sigma_pooled_ER": self.sigma_pooled,
            "max_error_ER": self.max_error,
            "policy": self.policy,
            "discarded_hopping_max_ER": self.discarded_hopping_max,
            "discarded_interaction_max_ER": self.discarded_interaction_max,
            "discarded_hopping_ER": np.sort(self.discarded_hopping)[::-1].tolist(),
            "discarded_interactions_ER": np.sort(self.discarded_interactions)[::-1].tolist(),
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


def validate(model: HubbardModel, bloch: BlochSolution) -> ValidationReport:
    """Compare tight-binding bands with the exact ones at every mesh point.

    Both sets are sorted at each k before differencing, since band labels
    inside a mixed group carry no meaning.
    """
    J = model.J
    exact = np.sort(bloch.energies[:, :J], axis=1)
    interp = np.sort(model.bands(bloch.mesh.kvecs), axis=1)
    err = interp - exact
    per_band = np.sqrt(np.mean(err**2, axis=0))
    return ValidationReport(
        sigma_bands=per_band,
        sigma=float(per_band.mean()),
        sigma_pooled=float(np.sqrt(np.mean(err**2))),
        max_error=float(np.abs(err).max()),
        policy=model.policy,
        discarded_hopping_max=float(model.discarded_hopping.max(initial=0.0)),
        discarded_interaction_max=float(model.discarded_interactions.max(initial=0.0)),
        discarded_hopping=model.discarded_hopping,
        discarded_interactions=model.discarded_interactions,
    )


def build_model(bloch: BlochSolution, result: LocalizationResult, policy="nn", g=1.0,
                interactions=True, points_per_cell=None, rank_tol=RANK_TOL) -> HubbardModel:
    """Hopping over the full mesh supercell, interactions one rank beyond the policy."""
    J = result.gauge.J
    centers = result.report.raw_centers
    geometry = bloch.mesh.geometry
    hop = hopping_parameters(bloch, result.gauge, centers, rank_tol=rank_tol)
    table, audit = None, {}
    if interactions:
        kind, arg = parse_policy(policy)
        if kind == "rank":
            top = arg + 1
        elif kind == "cells":
            top = int(hop.rank[np.abs(hop.cells).max(axis=1) <= arg].max()) + 1
        else:
            top = min(int(hop.rank.max()), 4)
        cells = np.unique(hop.cells[hop.rank <= top], axis=0)
        table, audit = interaction_parameters(bloch, result.gauge, centers, cells, g,
                                              points_per_cell, rank_tol)
        table = table.select(table.rank <= top)
    return truncate_model(geometry, J, centers, hop, table, policy, g, audit)


def ordinary_wannier_baseline(bloch: BlochSolution, J: int, policy="nn", g=1.0,
                              options: PipelineOptions | None = None, interactions=True):
    """Band-by-band localisation with no mixing, and its Hubbard model."""
    result = ordinary_gauge(bloch, J, options)
    model = build_model(bloch, result, policy, g, interactions)
    return result, model


def with_policy(model: HubbardModel, full_hopping: TermTable, policy: str) -> HubbardModel:
    """Re-truncate hopping from a full table, keeping the model's interactions."""
    kind, arg = parse_policy(policy)
    keep = _keep(full_hopping, kind, arg)
    if not keep.any():
        raise EmptyModelError("retention policy keeps no hopping terms", policy=policy)
    return replace(model, hopping=full_hopping.select(keep), policy=policy,
                   discarded_hopping=np.abs(full_hopping.value[~keep]))
