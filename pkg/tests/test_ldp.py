import math

import numpy as np
import pytest
from scipy.special import ndtr

from mvldp import TiltError
from mvldp.action import minimize_action
from mvldp.examples import load_example
from mvldp.ldp import (UNUSABLE, ErgodicSettings, EventSpec, dz_bound_check, estimate_event_prob,
                       fw_bound_check, invariant_tail_experiment, ldp_ladder, quasipotential_vs_tail,
                       rate_of)
from mvldp.schemas import validate, validate_rows
from mvldp.simulate import SimConfig
from mvldp.skeleton import Control, solve_skeleton, uniform_grid

OU = load_example("ou")
BM = load_example("brownian")
EVERYTHING = EventSpec.endpoint_threshold(0, -math.inf)
NOTHING = EventSpec.endpoint_threshold(0, math.inf)


def _ou_steering(T=1.0):
    return minimize_action(OU, [0.0], [1.0], T)


def test_trivial_events():
    cfg = SimConfig(0.25, 1.0, 10, seed=0)
    est = estimate_event_prob(BM, cfg, [0.0], EVERYTHING, 2000)
    assert (est.p_hat, est.se) == (1.0, 0.0)
    est = estimate_event_prob(BM, cfg, [0.0], NOTHING, 2000)
    assert est.p_hat == 0.0
    assert rate_of(est, 0.25) == (math.inf, math.inf)
    with pytest.raises(ValueError):
        estimate_event_prob(BM, cfg, [0.0], EVERYTHING, 10)
    with pytest.raises(TiltError):
        estimate_event_prob(BM, cfg, [0.0], EVERYTHING, 2000, mode="importance_sampled")


def test_gaussian_tail_probability():
    est = estimate_event_prob(BM, SimConfig(0.25, 1.0, 10, seed=1), [0.0],
                              EventSpec.endpoint_threshold(0, 1.0), 100_000)
    exact = float(ndtr(-2.0))
    assert exact == pytest.approx(0.02275, abs=1e-5)
    assert abs(est.p_hat - exact) <= 3 * est.se


def test_plain_and_importance_sampled_estimates_agree():
    ev = EventSpec.endpoint_threshold(0, 0.8)
    cfg = SimConfig(0.3, 1.0, 100, seed=4)
    tilt = _ou_steering().control
    a = estimate_event_prob(OU, cfg, [0.0], ev, 50_000)
    b = estimate_event_prob(OU, cfg.with_(seed=5), [0.0], ev, 50_000, "importance_sampled", tilt)
    assert abs(a.p_hat - b.p_hat) <= 3 * math.hypot(a.se, b.se)
    assert b.se < a.se


def test_sup_and_tube_events():
    t = uniform_grid(1.0, 4)
    paths = np.array([[[0.0], [0.5], [1.2], [0.9], [0.1]], [[0.0], [0.1], [0.2], [0.1], [0.0]]])
    assert list(EventSpec.sup_threshold(0, 1.0).evaluate(t, paths)) == [True, False]
    ref = solve_skeleton(OU, [0.0], Control.zero(t, 1, 0))[0]
    assert list(EventSpec.tube(ref, 0.25).evaluate(t, paths)) == [False, True]
    assert list(EventSpec.tube_complement(ref, 0.25).evaluate(t, paths)) == [True, False]
    j1 = EventSpec.tube(ref, 0.25, metric="j1_grid").evaluate(t, paths)
    assert list(j1) == [False, True]


def test_brownian_ladder_importance_sampled():
    t = uniform_grid(1.0, 10)
    tilt = Control.constant(t, 1.0, 1.0, 1, 0)
    rep = ldp_ladder(BM, [0.0], EventSpec.endpoint_threshold(0, 1.0), [0.25, 0.1, 0.05], 100_000,
                     1.0, 10, seed=5, mode="importance_sampled", tilt=tilt, benchmark=0.5)
    exact = [-e * math.log(ndtr(-1 / math.sqrt(e))) for e in (0.25, 0.1, 0.05)]
    for row, r in zip(rep.rows, exact):
        assert abs(row["rate"] - r) <= 3 * row["rate_se"]
    assert rep.passed
    assert rep.fit["intercept"] == pytest.approx(0.5, rel=0.15)
    validate_rows("ldp_row", rep.rows)
    validate("ldp_report", rep.to_dict())


def test_whole_space_ladder_has_zero_rates():
    rep = ldp_ladder(BM, [0.0], EVERYTHING, [0.5, 0.2], 1000, 1.0, 5, seed=0, benchmark=0.0)
    assert all(r["rate"] == 0.0 for r in rep.rows)
    assert rep.passed


def test_impossible_event_marks_rungs_unusable():
    rep = ldp_ladder(load_example("reflected_ramp"), [0.0], EventSpec.endpoint_threshold(0, -1.0, "le"),
                     [0.5, 0.2], 1000, 1.0, 10, seed=0)
    assert not rep.passed
    assert all(UNUSABLE in n for n in rep.notes)
    assert all(math.isinf(r["rate"]) for r in rep.rows)
    assert "inf" in rep.to_csv()


def test_ou_ladder_against_action_benchmark():
    res = _ou_steering()
    rep = ldp_ladder(OU, [0.0], EventSpec.endpoint_threshold(0, 1.0), [0.2, 0.1, 0.05], 100_000,
                     1.0, 100, seed=11, mode="importance_sampled", tilt=res.control,
                     benchmark=res.action.total, rel_tol=0.25)
    assert rep.passed
    assert rep.fit["intercept"] >= 0
    assert all(math.isfinite(r["rate"]) for r in rep.rows)


def test_reports_are_reproducible():
    t = uniform_grid(1.0, 10)
    tilt = Control.constant(t, 1.0, 1.0, 1, 0)
    args = (BM, [0.0], EventSpec.endpoint_threshold(0, 1.0), [0.25, 0.1], 5000, 1.0, 10, 3)
    a = ldp_ladder(*args, mode="importance_sampled", tilt=tilt, benchmark=0.5)
    b = ldp_ladder(*args, mode="importance_sampled", tilt=tilt, benchmark=0.5)
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()


def test_fw_zero_control_and_vacuous_upper_bound():
    c = Control.zero(uniform_grid(1.0, 50), 1, 0)
    rep = fw_bound_check(OU, [[0.0]], c, 0.25, 0.3, [0.05, 0.02], 2000, 50, seed=1,
                         M_prime=0.2, mode="plain")
    lower = [r for r in rep.rows if r["check"] == "fw_lower"]
    upper = [r for r in rep.rows if r["check"] == "fw_upper"]
    assert all(r["pass"] for r in lower)
    assert all(r["bound"] >= 1.0 for r in upper)  # theta >= M': right side >= 1
    assert rep.passed
    with pytest.raises(ValueError):
        fw_bound_check(OU, [[0.0]], c, 0.0, 0.3, [0.1], 2000, 50, seed=1)


def test_fw_uniformity_spot_check():
    c = Control.constant(uniform_grid(1.0, 50), 0.5, 1.0, 1, 0)
    starts = [[-0.4], [-0.2], [0.0], [0.2], [0.4]]
    rep = fw_bound_check(OU, starts, c, 0.3, 0.3, [0.1, 0.05], 5000, 50, seed=2)
    verdicts = {tuple(r["x0"]): r["pass"] for r in rep.rows if r["epsilon"] == 0.05}
    assert len(set(verdicts.values())) == 1


def test_dz_trivial_events():
    rep = dz_bound_check(OU, [[0.0], [0.3]], EVERYTHING, NOTHING, [0.2, 0.1], 1000, 1.0, 20, seed=0,
                         open_benchmark=0.0, closed_benchmark=5.0)
    assert rep.passed
    closed = [r for r in rep.rows if r["check"] == "dz_closed"]
    assert all(r["p_hat"] == 0.0 for r in closed)


def test_dz_open_tube_around_steered_path():
    res = _ou_steering()
    phi = solve_skeleton(OU, [0.0], res.control.matched_to(uniform_grid(1.0, 100)))[0]
    tube = EventSpec.tube(phi, 0.3)
    rep = dz_bound_check(OU, [[0.0]], tube, None, [0.2, 0.1, 0.05], 50_000, 1.0, 100, seed=3,
                         open_benchmark=res.action.total, closed_benchmark=None,
                         open_mode="importance_sampled", open_tilt=res.control)
    assert rep.passed
    row = rep.rows[0]
    assert row["rate"] <= res.action.total * 1.25 + 3 * row["rate_se"]


def test_invariant_tail_trivial_cases():
    p = load_example("strict_reflected")
    erg = ErgodicSettings(dt=0.01, burn_in=1.0, horizon=5.0, thin=0.5, n_chains=16, x0=(0.0,))
    rep = invariant_tail_experiment(p, [0.5, 0.2], [0.0, 0.5], 0.1, erg, seed=0)
    assert rep.passed
    zero = [r for r in rep.rows if r["check"] == "tail_bound" and r["r"] == 0.0]
    assert all(r["benchmark"] == 2.0 for r in zero)
    frozen = [r for r in rep.rows if r["check"] == "tail_bound" and r["r"] > 0]
    assert all(r["p_hat"] == 0.0 and r["censored"] for r in frozen)


def test_invariant_tail_strict_ladder():
    p = load_example("strict_reflected")
    erg = ErgodicSettings(dt=0.01, burn_in=2.0, horizon=10.0, thin=0.5, n_chains=64, x0=(1.0,))
    rep = invariant_tail_experiment(p, [0.5, 0.2, 0.1], [0.5, 1.0], 0.1, erg, seed=1)
    assert rep.passed
    assert [r for r in rep.rows if r["check"] == "tail_trend"]


def test_quasipotential_vs_tail_trivial_cases():
    erg = ErgodicSettings(dt=0.01, burn_in=2.0, horizon=20.0, thin=0.1, n_chains=16)
    rep = quasipotential_vs_tail(OU, [0.2], [0.5], [1.0, 2.0], erg=erg, seed=0, y_star=[[0.0]],
                                 y_grid=[[0.0], [0.5]], s=0.0, delta=10.0)
    lower = [r for r in rep.rows if r["check"] == "qp_lower"][0]
    assert lower["benchmark"] <= 1e-9 and lower["pass"]
    upper = [r for r in rep.rows if r["check"] == "qp_upper"][0]
    assert upper["p_hat"] == 0.0 and upper["pass"]


def test_quasipotential_vs_tail_ou_rate():
    erg = ErgodicSettings(dt=0.01, burn_in=2.0, horizon=400.0, thin=0.1, n_chains=64)
    rep = quasipotential_vs_tail(OU, [0.3, 0.15], [1.0], [1.0, 2.0, 5.0, 8.0], erg=erg, seed=4,
                                 y_grid=[[-1.5], [-1.0], [1.0], [1.5]])
    row = [r for r in rep.rows if r["check"] == "tail_rate" and r["epsilon"] == 0.15][0]
    assert row["benchmark"] == pytest.approx(1.0, rel=0.1)
    assert row["pass"], row
