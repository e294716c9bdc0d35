"""Shipped example problems as plain specifications for :func:`build_problem`.

``THEOREM_COMPLIANT`` lists the examples for which the structural flags
(origin a zero of A, Lipschitz drift/diffusion, jump admissibility and the
jump bounds) are expected to hold in the audit.
"""

from copy import deepcopy

from .model import build_problem

_HALFLINE = {"kind": "subdiff_indicator", "domain": {"kind": "halfline_nonneg"}}

EXAMPLES = {
    # b = -x, sigma = min(|x|, 1), f = 0.1 u min(x, 1), nu = 0.5 delta_1, reflected at 0
    "strict_reflected": {
        "name": "strict_reflected", "d": 1, "l": 1, "operator": _HALFLINE,
        "drift": [{"kind": "linear", "matrix": -1.0}],
        "diffusion": [{"kind": "norm_clamp", "matrix": 1.0, "cap": 1.0}],
        "jump": [{"kind": "mark_clamp", "coef": 0.1, "hi": 1.0}],
        "marks": [[1.0, 0.5]],
        "constants": {"L1": 2.0, "L_sigma": 1.0, "L3": 0.99, "gamma1": 0.1, "gamma2": 1.0},
        "regime": "strict",
    },
    # dX = -X dt + sqrt(eps) dW
    "ou": {
        "name": "ou", "d": 1, "l": 1, "operator": {"kind": "zero"},
        "drift": [{"kind": "linear", "matrix": -1.0}],
        "diffusion": [{"kind": "const", "matrix": 1.0}],
        "constants": {"L1": 1.0, "L_sigma": 1.0},
        "regime": "empirical",
    },
    "brownian": {
        "name": "brownian", "d": 1, "l": 1, "operator": {"kind": "zero"},
        "diffusion": [{"kind": "const", "matrix": 1.0}],
    },
    # drift -2 pushed against the wall at 0
    "reflected_ramp": {
        "name": "reflected_ramp", "d": 1, "l": 1, "operator": _HALFLINE,
        "drift": [{"kind": "const", "value": -2.0}],
    },
    "pure_jump": {
        "name": "pure_jump", "d": 1, "l": 1, "operator": {"kind": "zero"},
        "jump": [{"kind": "const", "value": 1.0}],
        "marks": [[1.0, 1.0]],
    },
    # OU plus shrinking jumps x -> (1 - 0.2 u) x
    "jump_ou": {
        "name": "jump_ou", "d": 1, "l": 1, "operator": {"kind": "zero"},
        "drift": [{"kind": "linear", "matrix": -1.0}],
        "diffusion": [{"kind": "const", "matrix": 1.0}],
        "jump": [{"kind": "mark_linear", "matrix": -0.2}],
        "marks": [[0.5, 1.0], [1.0, 0.5]],
        "regime": "empirical",
    },
    "box_2d": {
        "name": "box_2d", "d": 2, "l": 2,
        "operator": {"kind": "subdiff_indicator",
                     "domain": {"kind": "box", "lo": [-1.0, -1.0], "hi": [1.0, 1.0]}},
        "drift": [{"kind": "linear", "matrix": [[-1.0, 0.5], [-0.5, -1.0]]}],
        "diffusion": [{"kind": "diag_clamp", "coef": [1.0, 0.5], "cap": 1.0}],
        "jump": [{"kind": "mark_linear", "matrix": [[-0.2, 0.0], [0.0, -0.2]]}],
        "marks": [[0.5, 1.0], [1.0, 0.5]],
    },
}

THEOREM_COMPLIANT = ("strict_reflected", "ou", "brownian", "jump_ou", "box_2d")


def example_spec(name):
    if name not in EXAMPLES:
        raise KeyError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}")
    return deepcopy(EXAMPLES[name])


def load_example(name):
    return build_problem(example_spec(name))
