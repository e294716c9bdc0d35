import numpy as np
import pytest

from mvldp import HypothesisError
from mvldp.examples import EXAMPLES, THEOREM_COMPLIANT, example_spec, load_example
from mvldp.model import audit_hypotheses, build_problem, compensator_drift

HALFLINE = {"kind": "subdiff_indicator", "domain": {"kind": "halfline_nonneg"}}


def _reflected(jump):
    return {"d": 1, "operator": HALFLINE, "drift": [{"kind": "linear", "matrix": -1.0}],
            "diffusion": [{"kind": "const", "matrix": 1.0}], "jump": jump, "marks": [[1.0, 0.5]]}


def test_build_reflected_linear_system():
    p = build_problem(_reflected([{"kind": "mark_clamp", "coef": 0.1, "hi": 1.0}]))
    assert (p.d, p.l, len(p.nu)) == (1, 1, 1)
    assert p.f([3.0], 0) == pytest.approx([0.1])


def test_build_rejects_jump_leaving_domain():
    with pytest.raises(HypothesisError, match="H1_f"):
        build_problem(_reflected([{"kind": "const", "value": -2.0}]))


def test_build_brownian_and_unknown_preset():
    p = build_problem({"d": 2, "operator": {"kind": "zero"},
                       "diffusion": [{"kind": "const", "matrix": [[1, 0], [0, 1]]}]})
    assert p.sigma(np.zeros(2)) == pytest.approx(np.eye(2))
    with pytest.raises(HypothesisError, match="unknown drift preset"):
        build_problem({"d": 1, "drift": [{"kind": "cubic"}]})


def test_build_rejects_origin_outside_domain():
    with pytest.raises(HypothesisError, match="origin"):
        build_problem({"d": 1, "operator": {"kind": "subdiff_indicator",
                                            "domain": {"kind": "box", "lo": [1.0], "hi": [2.0]}}})


def test_problem_description_round_trip():
    for name in EXAMPLES:
        p = load_example(name)
        q = build_problem(p.spec())
        assert q.spec() == p.spec()


def test_audit_linear_drift_lipschitz():
    p = build_problem({"d": 1, "drift": [{"kind": "linear", "matrix": -1.0}]})
    rep = audit_hypotheses(p, n_samples=500, radius=2.0, rng_seed=1)
    assert rep.lipschitz_drift == pytest.approx(1.0, abs=1e-9)


def test_audit_strict_ratio_matches_symbolic_value():
    rep = audit_hypotheses(load_example("strict_reflected"), n_samples=2000, radius=1.0, rng_seed=3)
    # cross-check: dense scan of -(2 x b + sigma^2 + w f^2) / x^2 on (0, 1]
    x = np.linspace(1e-3, 1.0, 10001)
    ratio = -(2 * x * (-x) + x ** 2 + 0.5 * (0.1 * x) ** 2) / x ** 2
    assert ratio.min() == pytest.approx(0.995, abs=1e-12)
    assert rep.dissipativity_min == pytest.approx(0.995, abs=1e-9)
    assert rep.flags["H_bsf"]
    assert rep.regime == "strict"


def test_audit_constant_sigma_violates_dissipativity():
    p = build_problem({"d": 1, "drift": [{"kind": "linear", "matrix": -1.0}],
                       "diffusion": [{"kind": "const", "matrix": 1.0}]})
    rep = audit_hypotheses(p, n_samples=1000, radius=2.0, rng_seed=0)
    assert not rep.flags["H_bsf"]
    assert "H_bsf" in rep.violations
    assert abs(rep.violations["H_bsf"][0]) < 0.5


def test_audit_is_deterministic():
    p = load_example("box_2d")
    a = audit_hypotheses(p, n_samples=300, rng_seed=9).to_json()
    b = audit_hypotheses(p, n_samples=300, rng_seed=9).to_json()
    assert a == b
    with pytest.raises(ValueError):
        audit_hypotheses(p, n_samples=50)


@pytest.mark.parametrize("name", THEOREM_COMPLIANT)
def test_theorem_compliant_examples_pass_structural_flags(name):
    p = load_example(name)
    rep = audit_hypotheses(p, n_samples=2000, radius=2.0, rng_seed=0)
    for key in ("H_A", "H1_b_sigma", "H1_f", "H2_f", "H3_f"):
        assert rep.flags[key], key
    if p.constants.L1 is not None:
        assert rep.lipschitz_L1 <= p.constants.L1 + 1e-9


def test_compensator_drift_examples():
    p = build_problem({"d": 1, "jump": [{"kind": "mark_linear", "matrix": 1.0}], "marks": [[1.0, 0.5]]})
    assert compensator_drift(p, [2.0]) == pytest.approx([1.0])
    assert compensator_drift(load_example("ou"), [2.0]) == pytest.approx([0.0])
    spec = example_spec("strict_reflected")
    spec["marks"] = [[1.0, 0.5], [2.0, 0.25]]
    spec["constants"].pop("gamma1")
    q = build_problem(spec)
    assert compensator_drift(q, [3.0]) == pytest.approx([0.1])
