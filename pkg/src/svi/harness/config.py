"""Closed-schema experiment configuration.

Configs are YAML documents with five top-level blocks. Every key has a
default, unknown keys are rejected with a suggestion, and validation
collects all errors before reporting.
"""

from __future__ import annotations

import copy
import difflib
import re
from dataclasses import dataclass

import yaml

COMMANDS = (
    "simulate",
    "converge-dt",
    "converge-yosida",
    "picard",
    "averaging-sweep",
    "spde",
    "particles",
    "proptest",
)

POTENTIALS = ("zero", "quadratic", "halfline", "box", "ball", "ordered_cone", "coulomb_log", "inverse_power")


class ConfigError(ValueError):
    """All schema violations found in a document."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class Opt:
    """Leaf of the schema."""

    kind: str
    default: object = None
    bounds: tuple = ()
    choices: tuple = ()
    nullable: bool = False


def _num(default, *bounds, nullable=False):
    return Opt("float", default, bounds, nullable=nullable)


def _int(default, *bounds):
    return Opt("int", default, bounds)


_MARKS = {
    "kind": Opt("str", "atoms", choices=("uniform", "gaussian", "atoms")),
    "low": Opt("floats", -1.0),
    "high": Opt("floats", 1.0),
    "mean": Opt("floats", 0.0),
    "std": Opt("floats", 1.0),
    "atoms": Opt("matrix", [[1.0], [-1.0]]),
    "weights": Opt("floats", [0.5, 0.5]),
}

SCHEMA = {
    "command": Opt("str", "simulate", choices=COMMANDS),
    "problem": {
        "dimension": _int(1, (">=", 1)),
        "initial": Opt("floats", 0.0),
        "potential": {
            "kind": Opt("str", "halfline", choices=POTENTIALS),
            "lower": Opt("floats", 0.0),
            "upper": Opt("floats", 1.0),
            "center": Opt("floats", 0.0),
            "radius": _num(1.0, (">", 0)),
            "weights": Opt("floats", 1.0),
            "strength": _num(1.0, (">", 0)),
            "power": _num(1.0, (">", 0)),
        },
        "drift": {
            "linear": Opt("matrix", 0.0),
            "constant": Opt("floats", 0.0),
            "delayed": Opt("matrix", 0.0),
            "sup_feedback": _num(0.0),
        },
        "diffusion": {
            "additive": Opt("matrix", 0.0),
            "multiplicative": _num(0.0),
        },
        "jump": {
            "additive": _num(0.0),
            "multiplicative": _num(0.0),
        },
        "delay": {
            "kind": Opt("str", "constant", choices=("constant", "proportional", "full_path")),
            "value": _num(0.0, (">=", 0)),
        },
        "operator_A": Opt("matrix", None, nullable=True),
        "subdiff_scale": _num(1.0, (">", 0)),
        "noise": {
            "covariance": Opt("floats", 1.0),
        },
        "levy": {
            "intensity": _num(0.0, (">=", 0)),
            "marks": _MARKS,
        },
        "spde": {
            "modes": _int(8, (">=", 1)),
            "m0": _num(1.0, (">", 0)),
            "reaction": Opt("floats", [0.0]),
            "noise_q": Opt("floats", None, nullable=True),
            "initial_mode": _int(1, (">=", 1)),
            "initial_amplitude": _num(1.0),
            "obstacle": _num(None, nullable=True),
            "points": _int(21, (">=", 2)),
        },
        "averaging": {
            "jumps": Opt("bool", False),
            "amplitude": _num(1.0),
            "sigma0": _num(0.5, (">=", 0)),
            "decay": _num(1.0, (">", 0)),
            "jump_size": _num(0.3),
            "intensity": _num(2.0, (">=", 0)),
            "reflect": Opt("bool", True),
            "delay": _num(0.1, (">=", 0)),
            "x0": _num(1.0),
        },
        "particles": {
            "count": _int(5, (">=", 2)),
            "spacing": _num(1.0, (">", 0)),
            "sigma": _num(1.0, (">=", 0)),
        },
    },
    "numerics": {
        "dt": _num(1e-3, (">", 0)),
        "T": _num(1.0, (">", 0)),
        "h": _num(0.0, (">=", 0)),
        "scheme": Opt("str", "prox", choices=("prox", "yosida")),
        "eps": _num(None, (">", 0), nullable=True),
        "dt_grid": Opt("floats", None, nullable=True),
        "eps_grid": Opt("floats", None, nullable=True),
        "tol": _num(1e-10, (">", 0)),
        "max_iter": _int(30, (">=", 1)),
        "vi_slack": _num(10.0, (">=", 0)),
    },
    "mc": {
        "paths": _int(100, (">=", 1)),
        "seed": _int(0, (">=", 0)),
        "workers": _int(1, (">=", 1)),
        "chunk_size": _int(1000, (">=", 1)),
    },
    "output": {
        "directory": Opt("str", "svi-out"),
        "formats": Opt("strs", ["csv"], choices=("csv", "json")),
        "snapshot_every": _int(100, (">=", 1)),
        "record_runtime": Opt("bool", False),
    },
}

# study-specific defaults filled in when the generic value is left null
STUDY_DEFAULTS = {
    "converge-dt": {"dt_grid": [0.02, 0.01, 0.005, 0.0025]},
    "converge-yosida": {"eps_grid": [1e-1, 1e-2, 1e-3, 1e-4]},
    "averaging-sweep": {"eps_grid": [0.5, 0.1, 0.02, 0.004]},
}


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 only treats "1.0e-3" as a float; accept "1e-3" as well
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


_OPS = {
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
}


def _is_real(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _flat(x):
    if isinstance(x, list):
        return [y for item in x for y in _flat(item)]
    return [x]


def _check_leaf(opt, value, path, errors):
    name = path.rsplit(".", 1)[-1]
    if value is None:
        if not opt.nullable:
            errors.append(f"{path}: null is not allowed")
        return value
    kind = opt.kind
    if kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            errors.append(f"{path}: expected an integer, got {type(value).__name__}")
            return value
        values = [value]
    elif kind == "float":
        if not _is_real(value):
            errors.append(f"{path}: expected a number, got {type(value).__name__}")
            return value
        value = float(value)
        values = [value]
    elif kind == "bool":
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true/false, got {type(value).__name__}")
        return value
    elif kind == "str":
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {type(value).__name__}")
            return value
        values = [value]
    elif kind == "strs":
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            errors.append(f"{path}: expected a list of strings")
            return value
        values = value
    elif kind in ("floats", "matrix"):
        items = _flat(value)
        depth_ok = kind == "matrix" or not isinstance(value, list) or all(not isinstance(v, list) for v in value)
        if not depth_ok or not items or not all(_is_real(v) for v in items):
            shape = "a number or a list of numbers" if kind == "floats" else "a number, vector or matrix"
            errors.append(f"{path}: expected {shape}")
            return value
        values = items
    else:  # pragma: no cover
        raise AssertionError(kind)

    if opt.choices:
        for v in values:
            if v not in opt.choices:
                errors.append(f"{path}: {v!r} is not one of {', '.join(map(str, opt.choices))}")
    for op, bound in opt.bounds:
        for v in values:
            if not _OPS[op](v, bound):
                errors.append(f"{path}: {v!r} violates the bound {name} {op} {bound}")
    return value


def _validate(schema, doc, path, errors):
    out = {}
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        errors.append(f"{path or '<root>'}: expected a mapping, got {type(doc).__name__}")
        doc = {}
    for key in doc:
        if key not in schema:
            where = f"{path}.{key}" if path else str(key)
            hint = difflib.get_close_matches(str(key), list(schema), n=3, cutoff=0.6)
            msg = f"{where}: unknown key"
            if hint:
                msg += f"; did you mean {', '.join(hint)}?"
            else:
                msg += f"; allowed keys are {', '.join(schema)}"
            errors.append(msg)
    for key, sub in schema.items():
        where = f"{path}.{key}" if path else key
        if isinstance(sub, dict):
            out[key] = _validate(sub, doc.get(key), where, errors)
        elif key in doc:
            out[key] = _check_leaf(sub, doc[key], where, errors)
        else:
            out[key] = copy.deepcopy(sub.default)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration with every default materialized."""

    command: str
    problem: dict
    numerics: dict
    mc: dict
    output: dict

    def as_dict(self):
        return copy.deepcopy(
            {"command": self.command, "problem": self.problem, "numerics": self.numerics,
             "mc": self.mc, "output": self.output}
        )

    def with_overrides(self, command=None, seed=None, workers=None, out=None):
        d = self.as_dict()
        if command is not None:
            d["command"] = command
        if seed is not None:
            d["mc"]["seed"] = int(seed)
        if workers is not None:
            d["mc"]["workers"] = int(workers)
        if out is not None:
            d["output"]["directory"] = str(out)
        return from_dict(d)


def _cross_checks(cfg, errors):
    num = cfg["numerics"]
    grid = num["dt_grid"]
    if grid is not None:
        grid = _flat(grid)
        if any(v <= 0 for v in grid if _is_real(v)):
            errors.append("numerics.dt_grid: entries must satisfy dt > 0")
    eps = num["eps_grid"]
    if eps is not None and any(v <= 0 for v in _flat(eps) if _is_real(v)):
        errors.append("numerics.eps_grid: entries must satisfy eps > 0")
    if num["scheme"] == "yosida" and num["eps"] is None and cfg["command"] not in ("converge-yosida",):
        errors.append("numerics.eps: the yosida scheme needs eps > 0")
    marks = cfg["problem"]["levy"]["marks"]
    if marks["kind"] == "atoms":
        atoms = marks["atoms"]
        n_atoms = len(atoms) if isinstance(atoms, list) else 1
        if len(_flat(marks["weights"])) != n_atoms:
            errors.append("problem.levy.marks.weights: need one weight per atom")


def _resolve(cfg):
    for key, value in STUDY_DEFAULTS.get(cfg["command"], {}).items():
        if cfg["numerics"][key] is None:
            cfg["numerics"][key] = list(value)
    return cfg


def from_dict(doc):
    """Validate a parsed document; raises :class:`ConfigError` listing every problem."""
    errors = []
    cfg = _validate(SCHEMA, doc, "", errors)
    if not errors:
        _cross_checks(cfg, errors)
    if errors:
        raise ConfigError(errors)
    cfg = _resolve(cfg)
    return ExperimentConfig(**cfg)


def parse_config(text):
    """Parse and validate a YAML document (``str`` or UTF-8 ``bytes``)."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError([f"<document>: not valid UTF-8 ({exc.reason})"]) from None
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<document>: YAML syntax error: {exc}"]) from None
    return from_dict(doc)


def load_config(path):
    with open(path, "rb") as fh:
        return parse_config(fh.read())


def dump_config(cfg):
    return yaml.safe_dump(cfg.as_dict(), sort_keys=False)
