"""JSON schemas for every artifact the CLI writes.

Rows are validated one by one before a table is written. The version of
each schema is recorded in the run manifest.
"""

import jsonschema

_NUM = {"type": ["number", "string"]}  # non-finite floats travel as "inf"/"nan"
_VEC = {"type": "array", "items": {"type": "number"}}

PATH_ROW = {
    "type": "object",
    "properties": {"t": {"type": "number"}, "K_var": {"type": "number", "minimum": 0},
                   "jump_flag": {"type": "integer", "minimum": 0}},
    "patternProperties": {"^x_[0-9]+$": {"type": "number"}},
    "required": ["t", "K_var", "jump_flag", "x_1"],
    "additionalProperties": False,
}

LDP_ROW = {
    "type": "object",
    "properties": {
        "check": {"enum": ["ladder", "fw_lower", "fw_upper", "dz_open", "dz_closed",
                           "tail_bound", "tail_trend", "tail_rate", "qp_lower", "qp_upper"]},
        "x0": {"type": ["array", "string"]},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "p_hat": {"type": "number", "minimum": 0},
        "se": _NUM, "rate": _NUM, "rate_se": _NUM, "benchmark": _NUM, "margin": _NUM,
        "pass": {"type": "boolean"},
    },
    "required": ["check", "x0", "epsilon", "rate", "benchmark", "margin", "pass"],
}

LEVEL_SET_ROW = {
    "type": "object",
    "properties": {"y": _VEC, "V": _NUM, "member": {"type": "boolean"}},
    "required": ["y", "V", "member"],
    "additionalProperties": False,
}

LEVEL_SET = {
    "type": "object",
    "properties": {"level": {"type": "number", "minimum": 0},
                   "rows": {"type": "array", "items": LEVEL_SET_ROW},
                   "bounded": {"type": "boolean"}},
    "required": ["level", "rows", "max_member_radius", "bounded"],
}

AUDIT = {
    "type": "object",
    "properties": {
        "flags": {"type": "object", "additionalProperties": {"type": "boolean"},
                  "required": ["H_A", "origin_interior", "H1_b_sigma", "H2_sigma", "H1_f",
                               "H2_f", "H2prime_f", "H3_f", "H_bsf"]},
        "regime": {"enum": ["strict", "empirical", "none"]},
        "violations": {"type": "object"},
        "n_samples": {"type": "integer", "minimum": 100},
    },
    "required": ["flags", "regime", "violations", "lipschitz_L1", "dissipativity_min", "note"],
}

CONTROL = {
    "type": "object",
    "properties": {"times": _VEC, "h": {"type": "array"}, "g": {"type": "array"}},
    "required": ["times", "h", "g"],
}

ACTION_RESULT = {
    "type": "object",
    "properties": {
        "control": CONTROL,
        "action": {"type": "object", "required": ["brownian_cost", "jump_cost", "total"]},
        "gap": {"type": "number", "minimum": 0},
        "converged": {"type": "boolean"},
        "iterations": {"type": "integer", "minimum": 0},
        "penalty_schedule": _VEC,
    },
    "required": ["control", "action", "gap", "converged", "x0", "target", "T"],
}

QUASIPOTENTIAL = {
    "type": "object",
    "properties": {
        "target": _VEC, "value": _NUM, "horizon": {"type": ["number", "null"]},
        "control": {"anyOf": [CONTROL, {"type": "null"}]},
        "per_horizon": {"type": "array"},
    },
    "required": ["target", "value", "horizon", "per_horizon"],
}

SKELETON = {
    "type": "object",
    "properties": {"control": CONTROL, "path": {"type": "object"}, "action": {"type": "object"}},
    "required": ["control", "path", "action", "eta"],
}

PATH_BUNDLE = {
    "type": "object",
    "properties": {"paths": {"type": "array", "items": {"type": "object",
                   "required": ["times", "states", "force_increments", "jump_log"]}}},
    "required": ["paths", "epsilon"],
}

LDP_REPORT = {
    "type": "object",
    "properties": {"rows": {"type": "array", "items": LDP_ROW}, "passed": {"type": "boolean"}},
    "required": ["kind", "mode", "epsilons", "rows", "passed", "limitations"],
}

MANIFEST = {
    "type": "object",
    "properties": {
        "command": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "wall_time_s": {"type": "number", "minimum": 0},
        "exit_status": {"enum": [0, 1, 2]},
        "artifacts": {"type": "object", "additionalProperties": {
            "type": "object", "required": ["sha256", "schema"]}},
        "schemas": {"type": "object", "additionalProperties": {"type": "string"}},
        "backend": {"enum": ["numba", "numpy"]},
    },
    "required": ["command", "seed", "wall_time_s", "exit_status", "artifacts", "schemas",
                 "backend", "version"],
}

SCHEMAS = {
    "path_row": ("1.0", PATH_ROW),
    "ldp_row": ("1.0", LDP_ROW),
    "level_set_row": ("1.0", LEVEL_SET_ROW),
    "level_set": ("1.0", LEVEL_SET),
    "audit": ("1.0", AUDIT),
    "action_result": ("1.0", ACTION_RESULT),
    "quasipotential": ("1.0", QUASIPOTENTIAL),
    "skeleton": ("1.0", SKELETON),
    "path_bundle": ("1.0", PATH_BUNDLE),
    "ldp_report": ("1.0", LDP_REPORT),
    "manifest": ("1.0", MANIFEST),
}

_VALIDATORS = {}


def validator(name):
    if name not in _VALIDATORS:
        schema = SCHEMAS[name][1]
        cls = jsonschema.validators.validator_for(schema, default=jsonschema.Draft202012Validator)
        _VALIDATORS[name] = cls(schema)
    return _VALIDATORS[name]


def validate(name, obj):
    """Raise ``jsonschema.ValidationError`` if ``obj`` violates schema ``name``."""
    validator(name).validate(obj)


def validate_rows(name, rows):
    v = validator(name)
    for r in rows:
        v.validate(r)


def version(name):
    return SCHEMAS[name][0]
