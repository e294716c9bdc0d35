"""Run configuration: a TOML document with flat sections.

Sections and their keys are fixed by :data:`SECTIONS`. Unknown keys and
sections are errors, every optional key is materialized with its default,
and the resolved document round-trips through :func:`emit_config` and
:func:`parse_config`.

The ``[problem]`` section is either ``example = "<name>"`` (a shipped
example), a full problem specification, or both (explicit fields override
the example). After resolution it always holds the full specification.
"""

import re
import sys
from dataclasses import dataclass

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, MvldpError
from .examples import EXAMPLES, example_spec
from .model import build_problem

_REQUIRED = object()
_ABSENT = object()  # optional key without a default: omitted when unset

PROBLEM_KEYS = ("example", "name", "d", "l", "operator", "drift", "diffusion", "jump",
                "marks", "constants", "regime")

# key -> (type tag, default)
SECTIONS = {
    "grid": {
        "T": ("float", 1.0),
        "steps": ("int", 100),
        "x0": ("floats", _ABSENT),  # defaults to the origin once d is known
    },
    "noise": {
        "epsilon": ("float_or_floats", 0.1),
        "seed": ("int", _REQUIRED),
    },
    "audit": {
        "n_samples": ("int", 2000),
        "radius": ("float", 2.0),
        "tol": ("float", 1e-9),
        "empirical_radius": ("float", _ABSENT),
    },
    "simulate": {
        "n_paths": ("int", 1),
        "tilt_h": ("floats", _ABSENT),
        "tilt_g": ("float", _ABSENT),
    },
    "skeleton": {
        "h": ("floats", _ABSENT),
        "g": ("float", 1.0),
        "substeps": ("int", 1),
        "eta": ("float", 0.0),
    },
    "action": {
        "target": ("floats", _ABSENT),
        "T_grid": ("floats", [1.0, 2.0, 3.0, 5.0, 8.0]),
        "penalty_schedule": ("floats", [10.0, 100.0, 1000.0, 10000.0]),
        "cells_per_unit": ("float", 20.0),
        "min_cells": ("int", 10),
        "max_cells": ("int", 200),
        "substeps": ("int", 5),
        "max_iter": ("int", 500),
        "fd_step": ("float", 1e-6),
        "gap_rtol": ("float", 1e-3),
        "optimize_g": ("bool", True),
        "level_tol": ("float", 0.02),
        "level": ("float", _ABSENT),
        "y_grid": ("points", _ABSENT),
    },
    "ldp": {
        "check": (("ladder", "fw_bound"), "ladder"),
        "event": (("endpoint_threshold", "sup_threshold"), "endpoint_threshold"),
        "coordinate": ("int", 0),
        "level": ("float", 1.0),
        "direction": (("ge", "le"), "ge"),
        "mode": (("plain", "importance_sampled"), "plain"),
        "tilt": (("action", "constant"), "action"),
        "tilt_h": ("floats", _ABSENT),
        "tilt_g": ("float", 1.0),
        "n_rep": ("int_or_ints", 10000),
        "benchmark": ("float", _ABSENT),
        "rel_tol": ("float", 0.15),
        "abs_tol": ("float", 0.05),
        "delta": ("float", 0.25),
        "theta": ("float", 0.3),
        "M_prime": ("float", _ABSENT),
        "n_members": ("int", 8),
        "metric": (("uniform", "j1_grid"), "uniform"),
        "model_slack": ("float", 0.05),
    },
    "invariant": {
        "check": (("tail", "quasipotential"), "tail"),
        "beta": ("float", 0.1),
        "r": ("floats", [0.5, 1.0]),
        "dt": ("float", 0.01),
        "burn_in": ("float", 5.0),
        "horizon": ("float", 50.0),
        "thin": ("float", 0.1),
        "n_chains": ("int", 64),
        "min_hits": ("int", 1),
        "model_slack": ("float", 0.05),
        "rate_rtol": ("float", 0.3),
        "delta": ("float", 0.25),
        "theta": ("float", 0.3),
        "s": ("float", _ABSENT),
    },
    "output": {
        "dir": ("str", "out"),
        "format": (("csv", "json", "both"), "both"),
    },
}


@dataclass
class RunConfig:
    """Validated configuration. ``sections`` is the resolved document."""

    sections: dict
    problem: object

    def __getattr__(self, name):
        sec = self.__dict__.get("sections", {})
        if name in sec:
            return sec[name]
        raise AttributeError(name)

    @property
    def seed(self):
        return self.sections["noise"]["seed"]

    @property
    def epsilons(self):
        e = self.sections["noise"]["epsilon"]
        return list(e) if isinstance(e, list) else [e]

    def to_toml(self):
        return emit_config(self.sections)


# --- locating keys in the source text -------------------------------------------

_HEADER = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\-\"]+)\s*\]\]?")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-\"]+)\s*=")


def _line_of(text, section, key=None):
    """1-based line of ``key`` inside ``[section]`` (or of the header), else None."""
    current = ""
    header_line = None
    for i, raw in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(raw)
        if m:
            current = m.group(1).replace('"', "")
            if current == section and header_line is None:
                header_line = i
            continue
        if key is None:
            continue
        m = _KEY.match(raw)
        if m and m.group(1).replace('"', "") == key and current.split(".")[0] == section:
            return i
    return header_line if key is None else None


# --- type coercion ----------------------------------------------------------------


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(tag, v):
    """Return the normalized value or raise ValueError with a type description."""
    if isinstance(tag, tuple):
        if v not in tag:
            raise ValueError(f"expected one of {list(tag)}, got {v!r}")
        return v
    if tag == "float":
        if not _is_num(v):
            raise ValueError(f"expected a number, got {type(v).__name__}")
        return float(v)
    if tag == "int":
        if not isinstance(v, int) or isinstance(v, bool):
            raise ValueError(f"expected an integer, got {type(v).__name__}")
        return v
    if tag == "bool":
        if not isinstance(v, bool):
            raise ValueError(f"expected a boolean, got {type(v).__name__}")
        return v
    if tag == "str":
        if not isinstance(v, str):
            raise ValueError(f"expected a string, got {type(v).__name__}")
        return v
    if tag == "floats":
        if _is_num(v):
            v = [v]
        if not isinstance(v, list) or not all(_is_num(x) for x in v):
            raise ValueError("expected a list of numbers")
        return [float(x) for x in v]
    if tag == "float_or_floats":
        if _is_num(v):
            return float(v)
        if isinstance(v, list) and v and all(_is_num(x) for x in v):
            return [float(x) for x in v]
        raise ValueError("expected a number or a non-empty list of numbers")
    if tag == "int_or_ints":
        if isinstance(v, int) and not isinstance(v, bool):
            return v
        if isinstance(v, list) and v and all(isinstance(x, int) and not isinstance(x, bool) for x in v):
            return list(v)
        raise ValueError("expected an integer or a list of integers")
    if tag == "points":
        if not isinstance(v, list) or not v:
            raise ValueError("expected a non-empty list of points")
        out = []
        for y in v:
            y = [y] if _is_num(y) else y
            if not isinstance(y, list) or not all(_is_num(x) for x in y):
                raise ValueError("expected a list of points (numbers or lists of numbers)")
            out.append([float(x) for x in y])
        return out
    raise AssertionError(tag)


# --- parsing ----------------------------------------------------------------------


def _resolve_problem(raw, text):
    for k in raw:
        if k not in PROBLEM_KEYS:
            raise ConfigError(f"unknown key '{k}' in [problem]", f"problem.{k}", _line_of(text, "problem", k))
    spec = {}
    if "example" in raw:
        name = raw["example"]
        if name not in EXAMPLES:
            raise ConfigError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}",
                              "problem.example", _line_of(text, "problem", "example"))
        spec = example_spec(name)
    spec.update({k: v for k, v in raw.items() if k != "example"})
    if "d" not in spec:
        raise ConfigError("[problem] needs either 'example' or a full specification with 'd'",
                          "problem.d", _line_of(text, "problem"))
    try:
        p = build_problem(spec)
    except MvldpError as exc:
        raise ConfigError(f"invalid problem: {exc}", "problem", _line_of(text, "problem")) from exc
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid problem: {exc}", "problem", _line_of(text, "problem")) from exc
    resolved = p.spec()
    if "example" in raw:
        resolved = {"example": raw["example"], **resolved}
    return p, resolved


def parse_config(text, seed=None):
    """Parse and validate a configuration document.

    Parameters
    ----------
    text : str
        TOML document.
    seed : int, optional
        Overrides ``noise.seed`` (the command-line ``--seed``).

    Returns
    -------
    RunConfig
        With every default materialized.

    Raises
    ------
    ConfigError
        Malformed document, unknown section or key, wrong type, missing seed
        or a problem specification that does not build.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed document: {exc}", None, int(m.group(1)) if m else None) from exc
    for name, val in doc.items():
        if name != "problem" and name not in SECTIONS:
            where = _line_of(text, name) or _line_of_top(text, name)
            raise ConfigError(f"unknown section or key '{name}'", name, where)
        if not isinstance(val, dict):
            raise ConfigError(f"'{name}' must be a section", name, _line_of_top(text, name))
    if "problem" not in doc:
        raise ConfigError("missing [problem] section", "problem")
    problem, pspec = _resolve_problem(doc["problem"], text)
    out = {"problem": pspec}
    for sec, keys in SECTIONS.items():
        raw = doc.get(sec, {})
        for k in raw:
            if k not in keys:
                raise ConfigError(f"unknown key '{k}' in [{sec}]", f"{sec}.{k}", _line_of(text, sec, k))
        res = {}
        for k, (tag, default) in keys.items():
            if k in raw:
                try:
                    res[k] = _coerce(tag, raw[k])
                except ValueError as exc:
                    raise ConfigError(f"type mismatch: {exc}", f"{sec}.{k}", _line_of(text, sec, k)) from None
            elif default is _REQUIRED:
                if not (sec == "noise" and k == "seed" and seed is not None):
                    raise ConfigError(f"missing required key '{k}' in [{sec}]", f"{sec}.{k}",
                                      _line_of(text, sec))
            elif default is not _ABSENT:
                res[k] = list(default) if isinstance(default, list) else default
        out[sec] = res
    if seed is not None:
        out["noise"]["seed"] = int(seed)
    _finish(out, problem, text)
    return RunConfig(out, problem)


def _line_of_top(text, key):
    for i, raw in enumerate(text.splitlines(), start=1):
        if _HEADER.match(raw):
            return None
        m = _KEY.match(raw)
        if m and m.group(1) == key:
            return i
    return None


def _finish(out, p, text):
    """Dimension-dependent defaults and cross-field checks."""
    d = p.d

    def need(cond, msg, sec, key):
        if not cond:
            raise ConfigError(msg, f"{sec}.{key}", _line_of(text, sec, key))

    g = out["grid"]
    g.setdefault("x0", [0.0] * d)
    need(len(g["x0"]) == d, f"x0 must have {d} entries", "grid", "x0")
    need(g["T"] > 0, "T must be positive", "grid", "T")
    need(g["steps"] >= 1, "steps must be >= 1", "grid", "steps")
    seed = out["noise"]["seed"]
    need(0 <= seed < 2 ** 64, "seed must be a non-negative 64-bit integer", "noise", "seed")
    eps = out["noise"]["epsilon"]
    eps_list = eps if isinstance(eps, list) else [eps]
    need(all(0 < e < 1 for e in eps_list), "epsilon must lie in (0, 1)", "noise", "epsilon")
    if isinstance(eps, list):
        need(all(b < a for a, b in zip(eps, eps[1:])), "epsilon ladder must be strictly decreasing",
             "noise", "epsilon")
    sk = out["skeleton"]
    sk.setdefault("h", [0.0] * p.l)
    need(len(sk["h"]) == p.l, f"h must have {p.l} entries", "skeleton", "h")
    need(sk["g"] >= 0, "g must be non-negative", "skeleton", "g")
    sim = out["simulate"]
    if "tilt_h" in sim:
        need(len(sim["tilt_h"]) == p.l, f"tilt_h must have {p.l} entries", "simulate", "tilt_h")
    a = out["action"]
    a.setdefault("target", [1.0] + [0.0] * (d - 1))
    need(len(a["target"]) == d, f"target must have {d} entries", "action", "target")
    need(all(t > 0 for t in a["T_grid"]) and a["T_grid"], "T_grid must be positive horizons",
         "action", "T_grid")
    if "y_grid" in a:
        need(all(len(y) == d for y in a["y_grid"]), f"y_grid points must have {d} entries", "action", "y_grid")
    ld = out["ldp"]
    ld.setdefault("tilt_h", [0.0] * p.l)
    need(len(ld["tilt_h"]) == p.l, f"tilt_h must have {p.l} entries", "ldp", "tilt_h")
    need(0 <= ld["coordinate"] < d, "coordinate out of range", "ldp", "coordinate")
    reps = ld["n_rep"] if isinstance(ld["n_rep"], list) else [ld["n_rep"]]
    need(all(n >= 1000 for n in reps), "n_rep must be at least 1000", "ldp", "n_rep")
    if isinstance(ld["n_rep"], list):
        need(len(ld["n_rep"]) == len(eps_list), "n_rep schedule needs one entry per epsilon rung",
             "ldp", "n_rep")
    out["output"].setdefault("dir", "out")
    for sec, keys in SECTIONS.items():  # canonical key order, so emitted text is a fixed point
        out[sec] = {k: out[sec][k] for k in keys if k in out[sec]}


def emit_config(sections):
    """TOML text of a resolved document (inverse of :func:`parse_config`)."""
    return tomli_w.dumps(sections)


def load_config(path, seed=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), seed=seed)
