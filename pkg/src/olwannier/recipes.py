"""Data recipes behind the figures: each writes plot-ready CSV into the run directory."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .bloch import bands_on_path, solve_all
from .config import config_from_dict, load_config
from .errors import ConfigError
from .hubbard import build_model, hopping_parameters, interaction_parameters, validate
from .lattice import PotentialSpec, build_geometry, build_kmesh, preset_potential
from .wannier import PipelineOptions, localize, ordinary_gauge
from .wannier.synthesis import synthesize_wannier

SUPERLATTICE_S = (0.0, 0.25, 0.5, 0.8, 0.999)
HEXAGONAL_V0 = (5.0, 10.0, 15.0, 20.0, 30.0, 40.0)
KAGOME_V0 = (4.0, 6.0, 10.0, 15.0, 20.0)
MAX_RANK = 4


@dataclass(frozen=True)
class Recipe:
    description: str
    base: dict
    build: Callable
    sweep: str | None = None
    values: tuple = ()


def _write_rows(run, name, header, rows):
    with open(run.path(name), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    run.add_output(name, "csv")


def _options(cfg):
    return PipelineOptions(rand_seed=cfg.seed, tol=cfg.descent_tol, sweep_tol=cfg.sweep_tol,
                           max_iter=cfg.max_iter, restarts=cfg.restarts)


def _solve(cfg, potential=None, extra=2):
    potential = potential or cfg.potential()
    mesh = build_kmesh(potential.geometry, cfg.resolved_mesh(), cfg.E_cutoff)
    return solve_all(potential, mesh, min(cfg.J + extra, mesh.npw), cfg.threads)


def _superlattice(V0, s):
    """Superlattice potential including the s = 1 endpoint (period halves)."""
    if s < 1.0:
        return preset_potential("superlattice_1d", V0, s)
    coeffs = {(0,): V0 / 2.0, (2,): -V0 / 4.0, (-2,): -V0 / 4.0}
    return PotentialSpec(build_geometry(1, [[0.5]]), coeffs, True, True, depth=V0, name="superlattice_1d")


def _band_path_rows(cfg, potential, key, value, nbands):
    mesh = build_kmesh(potential.geometry, cfg.resolved_mesh(), cfg.E_cutoff)
    path = cfg.path or (["G", "X"] if potential.geometry.dimension == 1 else ["G", "M", "K", "G"])
    bp = bands_on_path(potential, mesh, path, cfg.path_samples, nbands)
    rows = [[value, s] + list(k) + list(e) for s, k, e in zip(bp.distance, bp.kvecs, bp.energies)]
    header = [key, "distance_inv_lambda"] + [f"k{i + 1}_inv_lambda" for i in range(bp.kvecs.shape[1])]
    header += [f"E{m + 1}_ER" for m in range(bp.energies.shape[1])]
    return header, rows, bp


# --- one-dimensional superlattice -----------------------------------------

def fig2c(cfg, run, values):
    rows, header = [], None
    for s in values:
        header, part, _ = _band_path_rows(cfg, _superlattice(cfg.V0, s), "s", s, cfg.bands_total or 4)
        rows += part
    _write_rows(run, "fig2c_bands.csv", header, rows)


def _superlattice_point(cfg, s, interactions=True):
    cfg = replace(cfg, s=s)
    bloch = _solve(cfg)
    out = {"bloch": bloch}
    for label, fn in (("generalized", localize), ("ordinary", ordinary_gauge)):
        result = fn(bloch, cfg.J, _options(cfg))
        model = build_model(bloch, result, cfg.policy, cfg.g, interactions)
        out[label] = (result, model, validate(model, bloch))
    return out


def _pair_rows(table, s, label):
    rows = []
    for m, n, cell, v in zip(table.m, table.n, table.cells, table.value):
        j = int(np.abs(cell).max())
        if j <= 3:
            rows.append([s, label, int(m) + 1, int(n) + 1, j, int(cell[0]), float(abs(v))])
    return rows


def _superlattice_sweep(cfg, run, values, what):
    spreads, hops, ints, sigmas = [], [], [], []
    for s in values:
        point = _superlattice_point(cfg, s, interactions=what == "interactions")
        for label in ("generalized", "ordinary"):
            result, model, report = point[label]
            run.omegas[f"s={s}:{label}"] = result.report.omega
            spreads.append([s, label, result.report.omega] + list(result.report.omega_d_bands))
            sigmas.append([s, label, report.sigma, report.sigma_pooled])
            full = hopping_parameters(point["bloch"], result.gauge, result.report.raw_centers, 3)
            hops += _pair_rows(full, s, label)
            if model.interactions is not None:
                ints += _pair_rows(model.interactions, s, label)
    pair = ["s", "states", "m", "n", "j", "cell"]
    if what == "spreads":
        header = ["s", "states", "omega_lambda2"] + [f"omega_D_band{m + 1}_lambda2" for m in range(cfg.J)]
        _write_rows(run, "fig3c_spreads.csv", header, spreads)
    elif what == "hopping":
        _write_rows(run, "fig4_hopping.csv", pair + ["abs_t_ER"], hops)
    elif what == "interactions":
        _write_rows(run, "fig5_interactions.csv", pair + ["abs_U_ER"], ints)
    else:
        _write_rows(run, "fig6b_sigma.csv", ["s", "states", "sigma_ER", "sigma_pooled_ER"], sigmas)


def fig3ab(cfg, run, values):
    s = values[0]
    point = _superlattice_point(cfg, s, interactions=False)
    bloch = point["bloch"]
    columns, x = [], None
    for label in ("generalized", "ordinary"):
        result = point[label][0]
        run.omegas[label] = result.report.omega
        for n in range(cfg.J):
            w = synthesize_wannier(bloch, result.gauge, n, None, cfg.supercell or 5)
            x = w.positions()[:, 0]
            columns.append((f"{label}_{n + 1}", w.values.real))
    header = ["x_lambda"] + [f"w_{name}_lambda^-1/2" for name, _ in columns]
    rows = [[xi] + [c[i] for _, c in columns] for i, xi in enumerate(x)]
    _write_rows(run, "fig3ab_wannier.csv", header, rows)
    v = _superlattice(cfg.V0, s).evaluate(x[:, None])
    _write_rows(run, "fig3ab_potential.csv", ["x_lambda", "V_ER"], zip(x, np.real(v)))


def fig6a(cfg, run, values):
    s = values[0]
    point = _superlattice_point(cfg, s, interactions=False)
    header, rows, bp = _band_path_rows(cfg, _superlattice(cfg.V0, s), "s", s, cfg.J)
    for label in ("generalized", "ordinary"):
        interp = np.sort(point[label][1].bands(bp.kvecs), axis=1)
        run.omegas[label] = point[label][0].report.omega
        header += [f"E{m + 1}_{label}_ER" for m in range(cfg.J)]
        rows = [r + list(e) for r, e in zip(rows, interp)]
    _write_rows(run, "fig6a_bands.csv", header, rows)


# --- two-dimensional lattices ---------------------------------------------

def _bands_2d(name):
    def build(cfg, run, values):
        header, rows, _ = _band_path_rows(cfg, cfg.potential(), "V0_ER", cfg.V0, cfg.bands_total or 6)
        _write_rows(run, name, header, rows)
    return build


def _ladder(bloch, result, g, top=MAX_RANK):
    """Largest |t_j| and |U_j| at each distance rank j <= top."""
    centers = result.report.raw_centers
    hop = hopping_parameters(bloch, result.gauge, centers)
    cells = np.unique(hop.cells[hop.rank <= top], axis=0)
    table, _ = interaction_parameters(bloch, result.gauge, centers, cells, g)
    return ([hop.magnitude_at_rank(j) for j in range(top + 1)],
            [table.magnitude_at_rank(j) for j in range(top + 1)])


def _elements(name):
    def build(cfg, run, values):
        rows = []
        for V0 in values:
            point = replace(cfg, V0=V0)
            bloch = _solve(point)
            result = localize(bloch, point.J, _options(point))
            run.omegas[f"V0={V0}"] = result.report.omega
            t, u = _ladder(bloch, result, point.g)
            report = validate(build_model(bloch, result, point.policy, point.g, interactions=False), bloch)
            rows.append([V0] + t + u + [report.sigma, report.sigma_pooled, result.report.omega])
        header = ["V0_ER"] + [f"abs_t{j}_ER" for j in range(MAX_RANK + 1)]
        header += [f"abs_U{j}_ER" for j in range(MAX_RANK + 1)]
        header += ["sigma_ER", "sigma_pooled_ER", "omega_lambda2"]
        _write_rows(run, name, header, rows)
    return build


def _wannier_maps(name):
    def build(cfg, run, values):
        bloch = _solve(cfg)
        result = localize(bloch, cfg.J, _options(cfg))
        run.omegas["final"] = result.report.omega
        maps = [synthesize_wannier(bloch, result.gauge, n, None, cfg.supercell or 5) for n in range(cfg.J)]
        pos = maps[0].positions().reshape(-1, 2)
        header = ["x_lambda", "y_lambda"] + [f"w{n + 1}_lambda^-1" for n in range(cfg.J)]
        rows = [list(p) + [w.values.real.reshape(-1)[i] for w in maps] for i, p in enumerate(pos)]
        _write_rows(run, name + "_wannier.csv", header, rows)
        centers = [[n + 1] + list(c) for n, c in enumerate(result.report.raw_centers)]
        _write_rows(run, name + "_centers.csv", ["band", "x_lambda", "y_lambda"], centers)
    return build


_SL = {"preset": "superlattice_1d", "V0": 20.0, "s": 0.0, "J": 2, "mesh": 32, "E_cutoff": 200.0,
       "policy": "cells:1"}
_HEX = {"preset": "hexagonal_2d", "V0": 10.0, "J": 2, "mesh": 15, "policy": "nn"}
_KAG = {"preset": "kagome_2d", "V0": 10.0, "J": 3, "mesh": 15, "policy": "nn"}

RECIPES = {
    "fig2c": Recipe("superlattice bands for s = 0, 0.5, 1", dict(_SL, bands_total=4), fig2c, "s", (0.0, 0.5, 1.0)),
    "fig3ab": Recipe("superlattice generalized and ordinary Wannier states, s = 0.999",
                     dict(_SL, supercell=5), fig3ab, "s", (0.999,)),
    "fig3c": Recipe("superlattice spreads versus s", _SL,
                    lambda c, r, v: _superlattice_sweep(c, r, v, "spreads"), "s", SUPERLATTICE_S),
    "fig4": Recipe("superlattice hopping |t_j^mn| versus s", _SL,
                   lambda c, r, v: _superlattice_sweep(c, r, v, "hopping"), "s", SUPERLATTICE_S),
    "fig5": Recipe("superlattice interactions |U_j^mn| versus s", _SL,
                   lambda c, r, v: _superlattice_sweep(c, r, v, "interactions"), "s", SUPERLATTICE_S),
    "fig6a": Recipe("superlattice exact and interpolated bands, s = 0.999", _SL, fig6a, "s", (0.999,)),
    "fig6b": Recipe("superlattice interpolation error sigma versus s", _SL,
                    lambda c, r, v: _superlattice_sweep(c, r, v, "sigma"), "s", SUPERLATTICE_S),
    "fig7c": Recipe("hexagonal bands, V0 = 10", dict(_HEX, bands_total=6), _bands_2d("fig7c_bands.csv")),
    "fig7d": Recipe("hexagonal bands, V0 = 30", dict(_HEX, V0=30.0, bands_total=6), _bands_2d("fig7d_bands.csv")),
    "fig8": Recipe("hexagonal Wannier states, V0 = 10", dict(_HEX, supercell=5), _wannier_maps("fig8")),
    "fig9": Recipe("hexagonal |t_j|, |U_j| and sigma versus V0", _HEX, _elements("fig9_elements.csv"),
                   "V0", HEXAGONAL_V0),
    "fig10c": Recipe("kagome bands, V0 = 2", dict(_KAG, V0=2.0, bands_total=6), _bands_2d("fig10c_bands.csv")),
    "fig11": Recipe("kagome Wannier states, V0 = 10", dict(_KAG, supercell=5), _wannier_maps("fig11")),
    "fig12": Recipe("kagome |t_j|, |U_j| and sigma versus V0", _KAG, _elements("fig12_elements.csv"),
                    "V0", KAGOME_V0),
}

OVERRIDES = ("seed", "threads", "V0", "s", "mesh", "J", "E_cutoff", "policy")


def recipe_config(recipe: Recipe, args=None):
    """Recipe defaults, then a config file, then command line overrides.

    Overriding the swept quantity replaces the sweep by that single value.
    """
    base = dict(recipe.base)
    if args is not None and getattr(args, "config", None):
        base.update({k: v for k, v in load_config(args.config).to_dict().items() if k in OVERRIDES})
    values = recipe.values
    for key in OVERRIDES:
        value = getattr(args, key, None) if args is not None else None
        if value is None:
            continue
        if key == recipe.sweep:
            values = (value,)
        else:
            base[key] = value
    if recipe.sweep == "s" and values:
        base["s"] = min(values[0], 0.999)
    return config_from_dict(base), values


def run_recipe(figure: str, args, out: str) -> int:
    from .cli import Run, write_run_summary

    if figure not in RECIPES:
        raise ConfigError(f"unknown figure id {figure!r}; choose from {', '.join(RECIPES)}", field="figure")
    recipe = RECIPES[figure]
    cfg, values = recipe_config(recipe, args)
    run = Run(cfg, f"reproduce {figure}", out)
    run.results["sweep"] = {"parameter": recipe.sweep, "values": [float(v) for v in values]}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        run.timed(figure, recipe.build, cfg, run, values)
    write_run_summary(run, caught)
    return 0
