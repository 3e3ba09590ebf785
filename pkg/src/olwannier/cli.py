"""Command line front-end: ``olwannier {bands,wannier,hubbard,validate,reproduce}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import replace

from . import __version__
from .bloch import bands_on_path, solve_all
from .config import RunConfig, config_from_dict, dump_config, load_config
from .errors import OLWannierError
from .hubbard import build_model, ordinary_wannier_baseline, validate
from .lattice import build_kmesh
from .wannier import PipelineOptions, localize
from .wannier.synthesis import synthesize_wannier

log = logging.getLogger("olwannier")

DEFAULT_PATHS = {1: ["G", "X"], 2: ["G", "M", "K", "G"]}
UNITS = {"energy": "E_R", "length": "lambda", "wave_vector": "1/lambda", "g": "E_R lambda^D"}


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects stage timings, spreads, results and output files for the manifest."""

    def __init__(self, cfg: RunConfig, command: str, out: str):
        self.cfg = cfg
        self.command = command
        self.out = out
        self.timings = {}
        self.omegas = {}
        self.results = {}
        self.outputs = []
        os.makedirs(out, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out, name)

    def timed(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        value = fn(*args, **kwargs)
        self.timings[name] = time.perf_counter() - start
        return value

    def add_output(self, name, kind):
        self.outputs.append({"path": name, "kind": kind})

    def write_json(self, name, payload):
        with open(self.path(name), "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
        self.add_output(name, "json")

    def record_pipeline(self, prefix, result):
        for stage in result.diagnostics.stages:
            self.omegas[f"{prefix}{stage['stage']}"] = stage["omega"]
            self.timings[f"{prefix}{stage['stage']}"] = stage["seconds"]

    def manifest(self):
        files = [dict(o, sha256=_sha256(self.path(o["path"]))) for o in self.outputs]
        body = {
            "tool": "olwannier",
            "version": __version__,
            "command": self.command,
            "config": self.cfg.numeric_dict(),
            "config_hash": self.cfg.config_hash(),
            "seed": self.cfg.seed,
            "omega_by_stage": self.omegas,
            "results": self.results,
            "outputs": [f for f in files if f["kind"] != "config"],
            "units": UNITS,
        }
        # the resolved config also records out/threads, so it stays out of the hash
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        body["outputs"] = files
        body["results_hash"] = hashlib.sha256(text.encode()).hexdigest()
        body["timings_s"] = self.timings
        with open(self.path("manifest.json"), "w") as fh:
            json.dump(body, fh, indent=1, sort_keys=True)
        return body


def _options(cfg: RunConfig):
    return PipelineOptions(rand_seed=cfg.seed, tol=cfg.descent_tol, sweep_tol=cfg.sweep_tol,
                           max_iter=cfg.max_iter, restarts=cfg.restarts)


def _bloch(run: Run, cfg: RunConfig, extra=2):
    potential = cfg.potential()
    mesh = build_kmesh(potential.geometry, cfg.resolved_mesh(), cfg.E_cutoff)
    total = min(cfg.J + extra, mesh.npw)
    bloch = run.timed("bloch", solve_all, potential, mesh, total, cfg.threads)
    return potential, mesh, bloch


def write_mesh_bands(path, bloch):
    d = bloch.mesh.geometry.dimension
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k_index"] + [f"k{i + 1}_inv_lambda" for i in range(d)]
                        + [f"E{m + 1}_ER" for m in range(bloch.nbands)])
        for i, (k, e) in enumerate(zip(bloch.mesh.kvecs, bloch.energies)):
            writer.writerow([i] + [repr(float(x)) for x in k] + [repr(float(x)) for x in e])


def cmd_bands(cfg: RunConfig, run: Run):
    potential = cfg.potential()
    mesh = build_kmesh(potential.geometry, cfg.resolved_mesh(), cfg.E_cutoff)
    total = cfg.bands_total or cfg.J + 4
    path = cfg.path or DEFAULT_PATHS.get(potential.geometry.dimension)
    band_path = run.timed("bands_on_path", bands_on_path, potential, mesh, path, cfg.path_samples, total)
    band_path.write_csv(run.path("bands.csv"))
    run.add_output("bands.csv", "csv")
    if "bands" in cfg.artifacts:
        bloch = run.timed("bloch", solve_all, potential, mesh, min(total, mesh.npw), cfg.threads)
        write_mesh_bands(run.path("bands_mesh.csv"), bloch)
        run.add_output("bands_mesh.csv", "csv")
        run.results["gap_above_J_ER"] = float(bloch.gap_above(cfg.J))
    run.results["path_labels"] = list(band_path.labels)
    run.results["npw"] = int(mesh.npw)


def _localize(cfg, run, bloch):
    result = run.timed("localize", localize, bloch, cfg.J, _options(cfg))
    run.record_pipeline("", result)
    run.results["omega"] = result.report.omega
    run.results["omega_d"] = result.report.omega_d
    run.results["omega_od"] = result.report.omega_od
    run.results["centers_lambda"] = result.report.centers.tolist()
    return result


def _write_wannier(cfg, run, bloch, result, prefix=""):
    if "spreads" in cfg.artifacts:
        payload = {"report": result.report.to_dict(), **result.diagnostics.to_dict()}
        for stage in payload["stages"]:
            stage.pop("seconds", None)
        run.write_json(f"{prefix}spreads.json", payload)
    if "wannier" in cfg.artifacts:
        supercell = cfg.supercell or min(bloch.mesh.size, 5)
        for n in range(cfg.J):
            w = synthesize_wannier(bloch, result.gauge, n, None, supercell)
            name = f"{prefix}wannier_{n + 1}"
            w.write_csv(run.path(name + ".csv"))
            w.write_heatmap(run.path(name + ".dat"))
            run.add_output(name + ".csv", "csv")
            run.add_output(name + ".dat", "matrix")
            run.results[f"{prefix}imag_fraction_{n + 1}"] = w.imag_fraction()


def cmd_wannier(cfg: RunConfig, run: Run):
    _, _, bloch = _bloch(run, cfg)
    result = _localize(cfg, run, bloch)
    _write_wannier(cfg, run, bloch, result)
    if cfg.compare_ordinary:
        from .wannier import ordinary_gauge

        ordinary = run.timed("ordinary", ordinary_gauge, bloch, cfg.J, _options(cfg))
        run.record_pipeline("ordinary_", ordinary)
        run.results["omega_ordinary"] = ordinary.report.omega
        _write_wannier(cfg, run, bloch, ordinary, "ordinary_")
    return bloch, result


def _model(cfg, run, bloch, result, prefix=""):
    model = run.timed(f"{prefix}hubbard", build_model, bloch, result, cfg.policy, cfg.g)
    if "hubbard" in cfg.artifacts:
        model.write_json(run.path(f"{prefix}hubbard.json"))
        model.write_csv(run.path(f"{prefix}hopping.csv"), run.path(f"{prefix}interactions.csv"))
        run.add_output(f"{prefix}hubbard.json", "json")
        run.add_output(f"{prefix}hopping.csv", "csv")
        run.add_output(f"{prefix}interactions.csv", "csv")
    report = validate(model, bloch)
    if "validation" in cfg.artifacts:
        run.write_json(f"{prefix}validation.json", report.to_dict())
    run.results[f"{prefix}sigma_ER"] = report.sigma
    run.results[f"{prefix}t1_ER"] = model.hopping.magnitude_at_rank(1)
    if model.interactions is not None:
        run.results[f"{prefix}U0_ER"] = model.interactions.magnitude_at_rank(0)
    return model, report


def cmd_hubbard(cfg: RunConfig, run: Run):
    _, _, bloch = _bloch(run, cfg)
    result = _localize(cfg, run, bloch)
    _write_wannier(cfg, run, bloch, result)
    model, report = _model(cfg, run, bloch, result)
    if cfg.compare_ordinary:
        ordinary, omodel = run.timed("ordinary", ordinary_wannier_baseline, bloch, cfg.J, cfg.policy,
                                     cfg.g, _options(cfg))
        run.record_pipeline("ordinary_", ordinary)
        run.results["omega_ordinary"] = ordinary.report.omega
        run.results["ordinary_sigma_ER"] = validate(omodel, bloch).sigma
    return bloch, result, model, report


def cmd_validate(cfg: RunConfig, run: Run):
    cfg = replace(cfg, artifacts=[a for a in cfg.artifacts if a != "wannier"] + ["validation"])
    bloch, result, model, report = cmd_hubbard(cfg, run)
    potential = cfg.potential()
    path = cfg.path or DEFAULT_PATHS.get(potential.geometry.dimension)
    exact = run.timed("bands_on_path", bands_on_path, potential, bloch.mesh, path, cfg.path_samples, cfg.J)
    interp = model.bands(exact.kvecs)
    with open(run.path("validation_bands.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distance_inv_lambda"] + [f"E{m + 1}_exact_ER" for m in range(cfg.J)]
                        + [f"E{m + 1}_model_ER" for m in range(cfg.J)])
        for s, e, t in zip(exact.distance, exact.energies, interp):
            writer.writerow([repr(float(s))] + [repr(float(x)) for x in e] + [repr(float(x)) for x in t])
    run.add_output("validation_bands.csv", "csv")
    run.results["sigma_bands_ER"] = report.sigma_bands.tolist()
    run.results["sigma_pooled_ER"] = report.sigma_pooled


COMMANDS = {"bands": cmd_bands, "wannier": cmd_wannier, "hubbard": cmd_hubbard, "validate": cmd_validate}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for the band permutation starts")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for the band solve")
    common.add_argument("--preset", help="lattice preset (overrides the config)")
    common.add_argument("--V0", type=float, help="lattice depth in E_R")
    common.add_argument("--s", type=float, help="superlattice shape parameter")
    common.add_argument("--mesh", type=int, help="k-points per reciprocal direction")
    common.add_argument("--bands", type=int, dest="J", help="number of bands J to localise")
    common.add_argument("--cutoff", type=float, dest="E_cutoff", help="plane-wave cutoff in E_R")
    common.add_argument("--policy", help="retention policy: all, nn, rank:<j>, cells:<r>")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="olwannier", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("bands", parents=[common], help="band structure along a path and on the mesh")
    sub.add_parser("wannier", parents=[common], help="maximally localised generalised Wannier states")
    sub.add_parser("hubbard", parents=[common], help="Hubbard parameters of the localised states")
    sub.add_parser("validate", parents=[common], help="tight-binding interpolation check")
    rep = sub.add_parser("reproduce", parents=[common], help="regenerate the data behind a figure")
    rep.add_argument("figure", help="figure id, e.g. fig3c (see --list)")
    rep.add_argument("--list", action="store_true", help="list figure ids and exit")
    return parser


OVERRIDES = ("seed", "out", "threads", "preset", "V0", "s", "mesh", "J", "E_cutoff", "policy")


def resolve_config(args) -> RunConfig:
    """Config file (if any) with command line overrides applied, re-validated."""
    base = {}
    if args.config:
        base = load_config(args.config).to_dict()
    for key in OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    if "preset" in base and base.get("custom") is not None and args.preset:
        base.pop("custom")
    if base.get("preset") != "superlattice_1d" and args.s is None:
        base.pop("s", None)
    return config_from_dict(base)


def write_run_summary(run: Run, caught=()):
    """Log captured warnings, write the resolved config and the manifest, print a summary."""
    for w in caught:
        log.warning("%s", w.message)
    run.results["warnings"] = sorted({str(w.message) for w in caught})
    with open(run.path("config.yaml"), "w") as fh:
        fh.write(dump_config(run.cfg))
    run.add_output("config.yaml", "config")
    run.manifest()
    print(json.dumps({"status": "ok", "out": run.out, "results": run.results}, default=float))


def _error_payload(exc):
    if isinstance(exc, OLWannierError):
        return exc.to_dict(), exc.code
    return {"error": type(exc).__name__, "code": 1, "message": str(exc), "context": {}}, 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out or "out"
    try:
        if args.command == "reproduce":
            from .recipes import RECIPES, run_recipe

            if args.list:
                for key, recipe in RECIPES.items():
                    print(f"{key}\t{recipe.description}")
                return 0
            return run_recipe(args.figure, args, out)
        cfg = resolve_config(args)
        out = args.out or cfg.out
        run = Run(cfg, args.command, out)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            COMMANDS[args.command](cfg, run)
        write_run_summary(run, caught)
        return 0
    except (OLWannierError, OSError) as exc:
        payload, code = _error_payload(exc)
        try:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "error.json"), "w") as fh:
                json.dump(payload, fh, indent=1, sort_keys=True, default=float)
        except OSError:
            pass
        print(json.dumps(payload, default=float), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
