"""YAML model files and the shipped presets.

A model file looks like::

    dimension: 1
    sites_per_axis: 8
    spacing: 1.0
    mass: 1.0
    charge: 1.0
    light_speed: 1.0
    hbar: 1.0
    potential:
      kind: harmonic        # zero | harmonic | custom-table
      stiffness: 0.25
      center: [3.5]         # optional, defaults to the box middle
    vector_potential:
      kind: constant        # zero | constant | custom-table
      value: [0.1]
    k0: 0.9                 # optional

``custom-table`` sections carry ``values``: one scalar per site for the
potential, one d-vector per site (or a scalar for d = 1) for the vector
potential, in row-major site order.
"""

from __future__ import annotations

import copy

import numpy as np
import yaml

from .errors import ConfigError
from .lattice import FieldConfig, LatticeSpec, ModelSpec, PhysicalConstants

__all__ = ["PRESETS", "preset", "preset_config", "load_model", "model_from_config", "parse_config"]

_TOP_KEYS = {
    "dimension",
    "sites_per_axis",
    "spacing",
    "mass",
    "charge",
    "light_speed",
    "hbar",
    "potential",
    "vector_potential",
    "k0",
}

# Defaults keep every CLI command well under a minute.
PRESETS = {
    "free": {
        "dimension": 1,
        "sites_per_axis": 8,
        "spacing": 1.0,
        "potential": {"kind": "zero"},
        "vector_potential": {"kind": "zero"},
    },
    "harmonic": {
        "dimension": 1,
        "sites_per_axis": 8,
        "spacing": 1.0,
        "potential": {"kind": "harmonic", "stiffness": 0.25},
        "vector_potential": {"kind": "zero"},
    },
    "constant-A": {
        "dimension": 1,
        "sites_per_axis": 8,
        "spacing": 1.0,
        "potential": {"kind": "zero"},
        "vector_potential": {"kind": "constant", "value": [0.1]},
    },
}


def preset_config(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose one of {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])


def preset(name: str, **overrides) -> ModelSpec:
    """Build a preset model; keyword overrides replace top-level config keys."""
    cfg = preset_config(name)
    cfg.update(overrides)
    return model_from_config(cfg, source=f"preset {name}")


def parse_config(text: str, source: str = "<string>") -> dict:
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{source}:{where}: {problem}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{source}: expected a mapping at top level")
    return cfg


def _key_lines(text: str) -> dict:
    """1-based line of every top-level and second-level key."""
    lines = {}
    root = yaml.compose(text)
    if not isinstance(root, yaml.MappingNode):
        return lines
    for key, value in root.value:
        lines[key.value] = key.start_mark.line + 1
        if isinstance(value, yaml.MappingNode):
            for sub, _ in value.value:
                lines[f"{key.value}.{sub.value}"] = sub.start_mark.line + 1
    return lines


def load_model(path) -> ModelSpec:
    """Read a YAML model file; schema errors name the offending key and its line."""
    with open(path) as fh:
        text = fh.read()
    cfg = parse_config(text, str(path))
    try:
        return model_from_config(cfg, source=str(path))
    except ConfigError as exc:
        line = _key_lines(text).get(exc.key) if exc.key else None
        if line is None and exc.key:
            line = _key_lines(text).get(exc.key.split(".")[0])
        if line is None:
            raise
        raise ConfigError(f"{exc} (line {line})", exc.key) from None


def _number(cfg, key, source, default=None, kind=float, key_prefix=None):
    if key_prefix:
        try:
            return _number(cfg, key, source, default, kind)
        except ConfigError as exc:
            raise ConfigError(str(exc), f"{key_prefix}.{key}") from None
    if key not in cfg:
        if default is None:
            raise ConfigError(f"{source}: missing required key '{key}'", key)
        return default
    value = cfg[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{source}: key '{key}' must be numeric, got {value!r}", key)
    if kind is int and value != int(value):
        raise ConfigError(f"{source}: key '{key}' must be an integer, got {value!r}", key)
    return kind(value)


def _section(cfg, key, source):
    sec = cfg.get(key, {"kind": "zero"})
    if not isinstance(sec, dict) or "kind" not in sec:
        raise ConfigError(f"{source}: section '{key}' needs a 'kind' entry", key)
    return sec


def _table(sec, key, shape, source):
    if "values" not in sec:
        raise ConfigError(f"{source}: '{key}.values' is required for kind custom-table", key)
    try:
        arr = np.asarray(sec["values"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: '{key}.values' is not numeric", key) from exc
    if arr.size != int(np.prod(shape)):
        raise ConfigError(
            f"{source}: '{key}.values' has {arr.size} entries, expected {int(np.prod(shape))}",
            key,
        )
    return arr.reshape(shape)


def _scalar_potential(sec, lattice, source):
    kind = sec["kind"]
    if kind == "zero":
        return np.zeros(lattice.n_sites)
    if kind == "harmonic":
        k = _number(sec, "stiffness", f"{source}: potential", key_prefix="potential")
        box = lattice.sites_per_axis * lattice.spacing
        default_center = [(lattice.sites_per_axis - 1) * lattice.spacing / 2] * lattice.dimension
        center = np.asarray(sec.get("center", default_center), dtype=float).reshape(-1)
        if center.size != lattice.dimension:
            raise ConfigError(f"{source}: 'potential.center' needs {lattice.dimension} entries", "potential")
        disp = lattice.positions() - center
        disp = (disp + box / 2) % box - box / 2  # periodic minimal image
        return 0.5 * k * np.sum(disp**2, axis=1)
    if kind == "custom-table":
        return _table(sec, "potential", (lattice.n_sites,), source)
    raise ConfigError(
        f"{source}: 'potential.kind' must be zero, harmonic or custom-table, got {kind!r}", "potential"
    )


def _vector_potential(sec, lattice, source):
    n, d = lattice.n_sites, lattice.dimension
    kind = sec["kind"]
    if kind == "zero":
        return np.zeros((n, d))
    if kind == "constant":
        if "value" not in sec:
            raise ConfigError(
                f"{source}: 'vector_potential.value' is required for kind constant", "vector_potential"
            )
        value = np.asarray(sec["value"], dtype=float).reshape(-1)
        if value.size != d:
            raise ConfigError(f"{source}: 'vector_potential.value' needs {d} entries", "vector_potential")
        return np.tile(value, (n, 1))
    if kind == "custom-table":
        return _table(sec, "vector_potential", (n, d), source)
    raise ConfigError(
        f"{source}: 'vector_potential.kind' must be zero, constant or custom-table, got {kind!r}",
        "vector_potential",
    )


def model_from_config(cfg: dict, source: str = "<config>") -> ModelSpec:
    """Validate a config mapping and build the model.

    Raises ``ConfigError`` for schema problems; an infeasible K0 surfaces as
    ``InfeasibleModelError`` from the model constructor.
    """
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {sorted(unknown)}", sorted(unknown)[0])
    try:
        lattice = LatticeSpec(
            _number(cfg, "dimension", source, kind=int),
            _number(cfg, "sites_per_axis", source, kind=int),
            _number(cfg, "spacing", source),
        )
        constants = PhysicalConstants(
            mass=_number(cfg, "mass", source, 1.0),
            charge=_number(cfg, "charge", source, 1.0),
            light_speed=_number(cfg, "light_speed", source, 1.0),
            hbar=_number(cfg, "hbar", source, 1.0),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    fields = FieldConfig(
        _vector_potential(_section(cfg, "vector_potential", source), lattice, source),
        _scalar_potential(_section(cfg, "potential", source), lattice, source),
    )
    k0 = _number(cfg, "k0", source) if cfg.get("k0") is not None else None
    return ModelSpec(lattice, constants, fields, k0)
