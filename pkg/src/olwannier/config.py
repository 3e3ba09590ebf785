"""Run configuration: parsing, validation with field diagnostics, canonical serialisation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .errors import ConfigError, OLWannierError
from .hubbard import parse_policy
from .lattice import DEFAULT_CUTOFF, DEFAULT_MESH, PRESETS, PotentialSpec, build_geometry, preset_potential
from .wannier.descent import DESCENT_TOL, MAX_ITER
from .wannier.disentangle import RESTARTS, SWEEP_TOL

ARTIFACTS = ("bands", "spreads", "wannier", "hubbard", "validation")
# settings that do not change any number written to disk
NON_NUMERIC = ("out", "threads")


@dataclass
class CustomPotential:
    dimension: int
    vectors: list
    coefficients: list  # [{"G": [...], "re": x, "im": y}, ...]
    time_reversal: bool = True
    inversion: bool = True


@dataclass
class RunConfig:
    preset: str | None = None
    V0: float | None = None
    s: float | None = None
    custom: CustomPotential | None = None
    mesh: int | None = None
    E_cutoff: float = DEFAULT_CUTOFF
    J: int = 1
    seed: int = 0
    descent_tol: float = DESCENT_TOL
    sweep_tol: float = SWEEP_TOL
    max_iter: int = MAX_ITER
    restarts: int = RESTARTS
    policy: str = "nn"
    g: float = 1.0
    out: str = "out"
    threads: int = 1
    artifacts: list = field(default_factory=lambda: list(ARTIFACTS))
    path: list | None = None
    path_samples: int = 60
    bands_total: int | None = None
    supercell: int | None = None
    compare_ordinary: bool = False

    @property
    def dimension(self) -> int:
        if self.custom is not None:
            return self.custom.dimension
        return 1 if self.preset.endswith("_1d") else 2

    def resolved_mesh(self) -> int:
        return self.mesh if self.mesh is not None else DEFAULT_MESH.get(self.dimension, 8)

    def potential(self) -> PotentialSpec:
        if self.custom is None:
            return preset_potential(self.preset, self.V0, self.s)
        c = self.custom
        geometry = build_geometry(c.dimension, c.vectors)
        coeffs = {tuple(e["G"]): complex(e.get("re", 0.0), e.get("im", 0.0)) for e in c.coefficients}
        return PotentialSpec(geometry, coeffs, c.time_reversal, c.inversion,
                             depth=float(self.V0 or 0.0), name="custom")

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["custom"] is None:
            out.pop("custom")
        return out

    def numeric_dict(self) -> dict:
        d = self.to_dict()
        for key in NON_NUMERIC:
            d.pop(key, None)
        return d

    def config_hash(self) -> str:
        text = json.dumps(self.numeric_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _line_map(text):
    """Line number (1-based) of every top-level and custom-section key."""
    lines = {}
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            lines[key.value] = key.start_mark.line + 1
            if isinstance(value, yaml.MappingNode):
                for k2, _ in value.value:
                    lines[f"{key.value}.{k2.value}"] = k2.start_mark.line + 1
    return lines


def _fail(message, key, lines):
    ctx = {"field": key}
    if key in lines:
        ctx["line"] = lines[key]
        message = f"line {lines[key]}: {key}: {message}"
    else:
        message = f"{key}: {message}"
    raise ConfigError(message, **ctx)


def _number(data, key, lines, kind=float, low=None, high=None, low_open=False):
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"expected a number, got {value!r}", key, lines)
    if kind is int and float(value) != int(value):
        _fail(f"expected an integer, got {value!r}", key, lines)
    value = kind(value)
    if low is not None and (value <= low if low_open else value < low):
        _fail(f"must be {'>' if low_open else '>='} {low}", key, lines)
    if high is not None and value > high:
        _fail(f"must be <= {high}", key, lines)
    return value


def config_from_dict(data: dict, lines: dict | None = None) -> RunConfig:
    """Validate a plain mapping into a RunConfig, raising ConfigError with the field (and line)."""
    lines = lines or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping of keys to values")
    known = {f.name for f in fields(RunConfig)} | {"lattice"}
    for key in data:
        if key not in known:
            _fail("unknown field", key, lines)
    data = dict(data)
    if "lattice" in data:
        if "preset" in data:
            _fail("give either lattice or preset, not both", "lattice", lines)
        data["preset"] = data.pop("lattice")
        if "lattice" in lines:
            lines["preset"] = lines["lattice"]
    cfg = RunConfig()

    if data.get("custom") is not None:
        if data.get("preset") is not None:
            _fail("give either a preset or a custom potential", "custom", lines)
        cfg.custom = _custom(data["custom"], lines)
        if data.get("s") is not None:
            _fail("s only applies to the superlattice_1d preset", "s", lines)
        if data.get("V0") is not None:
            cfg.V0 = _number(data, "V0", lines)
    else:
        preset = data.get("preset")
        if preset is None:
            _fail("a preset (or a custom potential) is required", "preset", lines)
        if preset not in PRESETS:
            _fail(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}", "preset", lines)
        cfg.preset = preset
        if data.get("V0") is None:
            _fail("lattice depth V0 is required", "V0", lines)
        cfg.V0 = _number(data, "V0", lines, low=0.0)
        if data.get("s") is not None:
            if preset != "superlattice_1d":
                _fail(f"s only applies to the superlattice_1d preset, not {preset}", "s", lines)
            cfg.s = _number(data, "s", lines, low=0.0)
            if cfg.s >= 1.0:
                _fail("must satisfy 0 <= s < 1", "s", lines)
        elif preset == "superlattice_1d":
            _fail("superlattice_1d needs the shape parameter s", "s", lines)

    if data.get("mesh") is not None:
        cfg.mesh = _number(data, "mesh", lines, int, low=4)
    if "E_cutoff" in data:
        cfg.E_cutoff = _number(data, "E_cutoff", lines, low=0.0, low_open=True)
    if "J" in data:
        cfg.J = _number(data, "J", lines, int, low=1)
    if "seed" in data:
        cfg.seed = _number(data, "seed", lines, int, low=0, high=2**64 - 1)
    for key in ("descent_tol", "sweep_tol", "g"):
        if key in data:
            setattr(cfg, key, _number(data, key, lines, low=0.0, low_open=key != "g"))
    for key in ("max_iter", "path_samples", "threads"):
        if key in data:
            setattr(cfg, key, _number(data, key, lines, int, low=1))
    if "restarts" in data:
        cfg.restarts = _number(data, "restarts", lines, int, low=0)
    if data.get("bands_total") is not None:
        cfg.bands_total = _number(data, "bands_total", lines, int, low=1)
    if data.get("supercell") is not None:
        cfg.supercell = _number(data, "supercell", lines, int, low=3)
    if "policy" in data:
        try:
            parse_policy(str(data["policy"]))
        except ConfigError as exc:
            _fail(str(exc), "policy", lines)
        cfg.policy = str(data["policy"])
    if "out" in data:
        cfg.out = str(data["out"])
    if "compare_ordinary" in data:
        if not isinstance(data["compare_ordinary"], bool):
            _fail("expected true or false", "compare_ordinary", lines)
        cfg.compare_ordinary = data["compare_ordinary"]
    if "artifacts" in data:
        arts = data["artifacts"]
        if not isinstance(arts, list) or any(a not in ARTIFACTS for a in arts):
            _fail(f"expected a list drawn from {', '.join(ARTIFACTS)}", "artifacts", lines)
        cfg.artifacts = list(arts)
    if data.get("path") is not None:
        if not isinstance(data["path"], list) or len(data["path"]) < 2:
            _fail("expected a list of at least two labels or coordinates", "path", lines)
        cfg.path = list(data["path"])
    if cfg.mesh is None:
        cfg.mesh = cfg.resolved_mesh()

    try:
        cfg.potential()
    except OLWannierError as exc:
        key = "custom" if cfg.custom is not None else "preset"
        _fail(str(exc), key, lines)
    return cfg


def _custom(data, lines):
    key = "custom"
    if not isinstance(data, dict):
        _fail("expected a mapping with dimension, vectors and coefficients", key, lines)
    for need in ("dimension", "vectors", "coefficients"):
        if need not in data:
            _fail(f"missing {need}", f"{key}.{need}" if f"{key}.{need}" in lines else key, lines)
    dim = data["dimension"]
    if dim not in (1, 2, 3):
        _fail("dimension must be 1, 2 or 3", f"{key}.dimension", lines)
    coeffs = data["coefficients"]
    if not isinstance(coeffs, list) or not coeffs:
        _fail("expected a non-empty list of {G, re, im} entries", f"{key}.coefficients", lines)
    clean = []
    for i, entry in enumerate(coeffs):
        if not isinstance(entry, dict) or "G" not in entry or len(entry["G"]) != dim:
            _fail(f"entry {i} needs G with {dim} integers", f"{key}.coefficients", lines)
        clean.append({"G": [int(x) for x in entry["G"]],
                      "re": float(entry.get("re", 0.0)), "im": float(entry.get("im", 0.0))})
    return CustomPotential(
        dimension=int(dim),
        vectors=[[float(x) for x in np.ravel(v)] for v in data["vectors"]],
        coefficients=clean,
        time_reversal=bool(data.get("time_reversal", True)),
        inversion=bool(data.get("inversion", True)),
    )


def parse_config(text: str) -> RunConfig:
    """Parse YAML (or JSON) text into a validated RunConfig."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"malformed configuration: {exc}", line=line) from exc
    if data is None:
        data = {}
    return config_from_dict(data, _line_map(text))


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file: {exc}", path=str(path)) from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Canonical YAML; ``parse_config(dump_config(c)) == c``."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=None)
