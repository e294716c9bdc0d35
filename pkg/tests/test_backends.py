import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mvldp import _loops, _vec
from mvldp.examples import EXAMPLES, load_example
from mvldp.model import build_problem

GOLDEN = Path(__file__).resolve().parents[1] / "docs" / "golden"

EXTRA = {
    "ball": {"d": 2, "operator": {"kind": "subdiff_indicator", "domain": {"kind": "ball", "radius": 1.0}}},
    "halfspaces": {"d": 3, "operator": {"kind": "subdiff_indicator", "domain": {
        "kind": "halfspaces", "normals": [[1, 0, 0], [0, 1, 0], [1, 1, 1]], "offsets": [1, 1, 1.5]}}},
    "logcosh": {"d": 2, "operator": {"kind": "subdiff_convex", "potential": "logcosh", "scale": 1.0}},
}
PROBLEMS = {**{n: load_example(n) for n in EXAMPLES}, **{n: build_problem(s) for n, s in EXTRA.items()}}


def _scheme_args(p, n=64, steps=40, eps=0.2, eta=0.0, seed=0):
    rng = np.random.default_rng(seed)
    dts = np.full(steps, 1.0 / steps)
    nm = len(p.nu)
    h = 0.3 * rng.standard_normal((1, steps, p.l))
    jcoef = np.ascontiguousarray(np.broadcast_to(-p.nu.weights, (1, steps, nm))) if nm else np.zeros((1, steps, 0))
    dW = rng.standard_normal((n, steps, p.l)) * np.sqrt(dts)[None, :, None]
    rates = p.nu.weights / eps if nm else np.zeros(0)
    counts = rng.poisson(np.broadcast_to(rates * dts[:, None], (n, steps, nm))).astype(float)
    x0 = np.full((n, p.d), 0.5)
    dp, sp, jp, marks, opp = p.packed()
    return (x0, dts, h, jcoef, dW, counts, eps, True, eta, 4, dp, sp, jp, marks, opp)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_scheme_kernels_agree(name):
    p = PROBLEMS[name]
    args = _scheme_args(p)
    a, b = _loops.euler_paths(*args), _vec.euler_paths(*args)
    assert len(a) == len(b)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("name", ["strict_reflected", "reflected_ramp"])
def test_yosida_kernels_agree(name):
    args = _scheme_args(PROBLEMS[name], eta=0.05)
    for u, v in zip(_loops.euler_paths(*args), _vec.euler_paths(*args)):
        np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
@given(X=arrays(np.float64, (8, 3), elements=st.floats(-5, 5)), eta=st.floats(0.01, 3.0))
def test_resolvent_kernels_agree(name, X, eta):
    p = PROBLEMS[name]
    X = np.ascontiguousarray(X[:, :p.d])
    opp = p.packed()[4]
    for u, v in zip(_loops.resolvent_rows(opp, eta, X), _vec.resolvent_rows(opp, eta, X)):
        np.testing.assert_allclose(u, v, rtol=1e-9, atol=1e-10)


def _run_cli(cmd, out, numba_flag):
    env = dict(os.environ, MVLDP_NUMBA=numba_flag)
    code = ("import sys; from mvldp.cli import main; "
            f"sys.exit(main([{cmd!r}, '--config', {str(GOLDEN / cmd / 'config.toml')!r}, "
            f"'--out', {str(out)!r}, '--quiet']))")
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)


@pytest.mark.parametrize("cmd", ["simulate", "skeleton", "ldp"])
def test_cli_output_is_backend_independent(cmd, tmp_path):
    runs = {}
    for flag in ("1", "0"):
        r = _run_cli(cmd, tmp_path / flag, flag)
        assert r.returncode in (0, 1), r.stderr
        runs[flag] = tmp_path / flag
    m_nb = json.loads((runs["1"] / "manifest.json").read_text())
    m_np = json.loads((runs["0"] / "manifest.json").read_text())
    assert (m_nb["backend"], m_np["backend"]) == ("numba", "numpy")
    assert m_nb["exit_status"] == m_np["exit_status"]
    for f in sorted(runs["1"].glob("*.csv")):
        a = np.genfromtxt(f, delimiter=",", skip_header=1)
        b = np.genfromtxt(runs["0"] / f.name, delimiter=",", skip_header=1)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12, equal_nan=True)
