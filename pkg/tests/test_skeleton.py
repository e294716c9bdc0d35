import math

import numpy as np
import pytest

from mvldp import GridTooCoarseError
from mvldp.examples import load_example
from mvldp.skeleton import (Control, solve_skeleton, solve_skeleton_yosida, solve_unperturbed,
                            uniform_grid)


def test_linear_ode_under_constant_control():
    p = load_example("ou")
    c = Control.constant(uniform_grid(1.0, 1000), 1.0, 1.0, 1, 0)
    path, force = solve_skeleton(p, [0.0], c)
    assert abs(path.final[0] - (1 - math.exp(-1))) <= 1e-3
    assert np.all(force.increments == 0.0)


def test_strict_origin_is_fixed():
    p = load_example("strict_reflected")
    c = Control.zero(uniform_grid(2.0, 200), 1, 1)
    path, _ = solve_skeleton(p, [0.0], c)
    assert np.all(path.states == 0.0)
    assert np.all(solve_unperturbed(p, [0.0], (2.0, 200)).states == 0.0)


def test_pure_jump_steering():
    p = load_example("pure_jump")
    c = Control.constant(uniform_grid(1.0, 100), 0.0, 2.0, 1, 1)
    path, _ = solve_skeleton(p, [0.25], c)
    assert path.final[0] == pytest.approx(1.25, abs=1e-9)


def test_unperturbed_closed_forms():
    ou = load_example("ou")
    path = solve_unperturbed(ou, [2.0], (1.0, 1000))
    assert np.max(np.abs(path.states[:, 0] - 2 * np.exp(-path.times))) <= 1e-3
    ramp = solve_unperturbed(load_example("reflected_ramp"), [1.0], (1.0, 1000))
    assert np.max(np.abs(ramp.states[:, 0] - np.maximum(1 - 2 * ramp.times, 0))) <= 2e-3


def test_zero_control_equals_unperturbed_bitwise():
    for name, x0 in (("box_2d", [0.5, -0.3]), ("jump_ou", [1.0]), ("strict_reflected", [0.7])):
        p = load_example(name)
        t = uniform_grid(3.0, 300)
        a = solve_skeleton(p, x0, Control.zero(t, p.l, len(p.nu)))[0].states
        b = solve_unperturbed(p, x0, t).states
        assert np.array_equal(a, b)


def test_yosida_with_zero_operator_is_identical():
    p = load_example("ou")
    c = Control.constant(uniform_grid(1.0, 200), 0.5, 1.0, 1, 0)
    a = solve_skeleton(p, [0.3], c)[0].states
    b = solve_skeleton_yosida(p, 0.1, [0.3], c).states
    assert np.array_equal(a, b)


def test_yosida_agrees_in_the_interior():
    p = load_example("strict_reflected")
    c = Control.constant(uniform_grid(1.0, 10_000), 0.2, 1.0, 1, 1)
    a = solve_skeleton(p, [0.5], c)[0].states
    b = solve_skeleton_yosida(p, 1e-4, [0.5], c).states
    assert a.min() > 0.1
    assert np.max(np.abs(a - b)) <= 1e-6


def test_yosida_converges_on_reflected_ramp():
    p = load_example("reflected_ramp")
    t = uniform_grid(1.0, 20_000)
    c = Control.zero(t, 1, 0)
    ref = solve_skeleton(p, [1.0], c)[0].states
    errs = [np.max(np.abs(solve_skeleton_yosida(p, eta, [1.0], c).states - ref))
            for eta in (1e-1, 1e-2, 1e-3)]
    assert errs[0] > errs[1] > errs[2]
    with pytest.raises(GridTooCoarseError, match="grid too coarse"):
        solve_skeleton_yosida(p, 1e-3, [1.0], Control.zero(uniform_grid(1.0, 10), 1, 0))


def test_decay_bound_on_strict_example():
    p = load_example("strict_reflected")
    L3 = p.constants.L3
    for x0 in (0.5, 1.0, 3.0):
        path = solve_unperturbed(p, [x0], (5.0, 5000))
        bound = x0 ** 2 * np.exp(-L3 * path.times)
        assert np.all(path.states[:, 0] ** 2 <= bound * 1.02)


def test_grid_refinement_rate():
    p = load_example("box_2d")
    x0 = [0.2, 0.1]

    def run(m):
        return solve_skeleton(p, x0, Control.constant(uniform_grid(1.0, m), [0.4, -0.3], 1.2, 2, 2))[0]

    ref = run(2000)
    errs = []
    for m in (100, 200):
        path = run(m)
        errs.append(np.max(np.abs(path.states - ref.value_at(path.times))))
    assert 1.4 <= errs[0] / errs[1] <= 3.0


def test_control_continuity_constant_is_stable():
    p = load_example("strict_reflected")
    t = uniform_grid(1.0, 200)
    base = solve_skeleton(p, [0.5], Control.constant(t, 0.3, 1.0, 1, 1))[0].final
    C = []
    for delta in (1e-2, 1e-3):
        moved = solve_skeleton(p, [0.5], Control.constant(t, 0.3 + delta, 1.0, 1, 1))[0].final
        C.append(float(np.linalg.norm(moved - base)) / delta)
    assert C[0] > 0
    assert C[0] == pytest.approx(C[1], rel=0.1)


def test_control_serialization_and_budget():
    t = uniform_grid(2.0, 4)
    c = Control(t, [[1.0], [0.0], [2.0], [0.0]], [[1.0, 2.0]] * 4)
    assert c.N == pytest.approx(0.5 * 1 + 0.5 * 4)
    d = Control.from_dict(c.to_dict())
    assert np.array_equal(d.h, c.h) and np.array_equal(d.g, c.g)
    f = c.refine(3)
    assert f.steps == 12 and f.N == pytest.approx(c.N)
    assert c.matched_to(uniform_grid(2.0, 8)).steps == 8
