"""Experiment manifests: a flat-sectioned TOML subset with a fixed schema.

Grammar (a strict subset of TOML)::

    file    := (section | comment | blank)*
    section := "[" name "]" NEWLINE (entry | comment | blank)*
    entry   := key " = " value NEWLINE
    key     := word ("." word)*            # e.g. rho.family
    value   := int | float | bool | "string" | "[" value ("," value)* "]"

Every key has a declared type; ints are accepted where floats are declared.
Unknown sections and unknown keys are errors.  :func:`dump` writes the
resolved configuration back in the same grammar.
"""

from __future__ import annotations

import math
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

INT, FLOAT, BOOL, STR = "int", "float", "bool", "str"
FLOATS, INTS = "float[]", "int[]"
NUMBER_OR_FLOATS = "float|float[]"

# section -> key -> (type, default); default None means "no default"
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "model": {
        "target": (STR, "two-well"),
        "epsilon": (FLOAT, 0.1),
        "beta": (FLOAT, 4.0),
        "R": (FLOAT, 1.2),
        "d": (INT, 24),
        "quad.x2_min": (FLOAT, -5.0),
        "quad.x2_max": (FLOAT, 6.0),
        "quad.rtol": (FLOAT, 1e-8),
        "quad.max_levels": (INT, 8),
    },
    "bias": {
        "rho.family": (STR, "power"),
        "rho.a": (FLOAT, 1.0),
        "rho.t0": (FLOAT, 0.0),
        "rho.value": (FLOAT, 1.0),
        "alpha": (FLOAT, 1.0),
        "mu": (FLOAT, 1.0),
        "gamma": (FLOAT, None),
    },
    "proposal": {
        "sigma2": (FLOAT, 0.01),
    },
    "run": {
        "steps": (INT, 1000),
        "seed": (INT, 0),
        "stride": (INT, 1),
        "theta_stride": (INT, 1000),
        "verify": (BOOL, False),
        "schedule": (STR, "shus"),
        "schedule_c": (FLOAT, 1.0),
        "x0": (NUMBER_OR_FLOATS, None),
    },
    "experiment": {
        "grid": (FLOATS, None),
        "K": (INT, 100),
        "cap": (INT, None),
        "replicas": (INT, 10),
        "exit_x1": (FLOAT, 1.0),
        "sets.alpha": (FLOATS, None),
        "sets.a": (FLOATS, None),
        "sets.mu": (FLOATS, None),
        "a_grid": (FLOATS, None),
        "theta_star": (FLOATS, None),
    },
    "output": {
        "dir": (STR, "out"),
    },
}


class ConfigError(ValueError):
    """The manifest cannot be parsed or does not match the schema."""


def _flatten(table: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in table.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _check_type(where: str, kind: str, v):
    if kind == NUMBER_OR_FLOATS:
        if isinstance(v, list):
            return _check_type(where, FLOATS, v)
        return _check_type(where, FLOAT, v)
    if kind.endswith("[]"):
        if not isinstance(v, list) or not v:
            raise ConfigError(f"{where}: expected a nonempty array")
        return [_check_type(where, kind[:-2], x) for x in v]
    if kind == BOOL:
        if not isinstance(v, bool):
            raise ConfigError(f"{where}: expected a bool")
        return v
    if kind == INT:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{where}: expected an integer")
        return v
    if kind == FLOAT:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(v)
    if not isinstance(v, str):
        raise ConfigError(f"{where}: expected a string")
    return v


def parse(text: str) -> dict[str, dict]:
    """Parse and validate manifest text; only keys present in the text are returned."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    out: dict[str, dict] = {}
    for section, table in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        out[section] = {}
        for key, v in _flatten(table).items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            out[section][key] = _check_type(f"{section}.{key}", SCHEMA[section][key][0], v)
    return out


def load(path) -> dict[str, dict]:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def resolve(cfg: dict[str, dict], sections) -> dict[str, dict]:
    """Fill defaults for ``sections``; keys without defaults are left out."""
    out = {}
    for section in sections:
        given = cfg.get(section, {})
        table = {}
        for key, (_, default) in SCHEMA[section].items():
            if key in given:
                table[key] = given[key]
            elif default is not None:
                table[key] = default
        out[section] = table
    return out


def _escape(c: str) -> str:
    if c in '"\\':
        return "\\" + c
    if ord(c) < 0x20 or ord(c) == 0x7F:
        return f"\\u{ord(c):04x}"
    return c


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return '"' + "".join(_escape(c) for c in v) + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(f"cannot format {v!r}")


def dump(cfg: dict[str, dict]) -> str:
    lines = []
    for section in SCHEMA:
        if section not in cfg:
            continue
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            if key in cfg[section]:
                lines.append(f"{key} = {_fmt(cfg[section][key])}")
    return "\n".join(lines) + "\n"
