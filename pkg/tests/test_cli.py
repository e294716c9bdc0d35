import csv
import json
import math
from pathlib import Path

import pytest
import tomli_w
from hypothesis import given, settings, strategies as st

from mvldp import ConfigError
from mvldp.cli import main, run_command, shipped_config, shipped_configs
from mvldp.config import emit_config, parse_config
from mvldp.schemas import validate

GOLDEN = Path(__file__).resolve().parents[1] / "docs" / "golden"

MINIMAL = """
[problem]
example = "ou"

[grid]
T = 2.0
steps = 40

[noise]
seed = 7
"""


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir()) if p.name != "manifest.json"}


# --- configuration ----------------------------------------------------------------


def test_minimal_document_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.seed == 7
    assert cfg.sections["noise"]["epsilon"] == 0.1
    assert cfg.sections["grid"]["x0"] == [0.0]
    assert cfg.sections["action"]["penalty_schedule"] == [10.0, 100.0, 1000.0, 10000.0]
    assert cfg.problem.d == 1


def test_unknown_key_is_named_with_its_line():
    text = '[problem]\nexample = "ou"\nsigme = 1.0\n[noise]\nseed = 1\n'
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = str(exc.value)
    assert "sigme" in msg and "line 3" in msg
    with pytest.raises(ConfigError, match="tepz"):
        parse_config(MINIMAL + "tepz = 3\n")


def test_missing_seed_and_type_errors():
    with pytest.raises(ConfigError, match="seed"):
        parse_config('[problem]\nexample = "ou"\n')
    with pytest.raises(ConfigError, match="grid.steps"):
        parse_config(MINIMAL.replace("steps = 40", 'steps = "many"'))
    assert parse_config('[problem]\nexample = "ou"\n', seed=3).seed == 3


def test_epsilon_ladder():
    cfg = parse_config(MINIMAL.replace("seed = 7", "seed = 7\nepsilon = [0.5, 0.2, 0.1]"))
    assert cfg.epsilons == [0.5, 0.2, 0.1]


@pytest.mark.parametrize("name", shipped_configs())
def test_shipped_configs_round_trip(name):
    cfg = parse_config(shipped_config(name))
    again = parse_config(cfg.to_toml())
    assert again.sections == cfg.sections
    assert again.to_toml() == cfg.to_toml()


@settings(max_examples=40)
@given(T=st.floats(0.1, 10.0), steps=st.integers(1, 500), seed=st.integers(0, 2 ** 63 - 1),
       eps=st.lists(st.floats(0.01, 0.99), min_size=1, max_size=4, unique=True).map(
           lambda v: sorted(v, reverse=True)),
       x0=st.floats(-3, 3), n_rep=st.integers(1000, 10 ** 6), level=st.floats(-5, 5))
def test_config_round_trip(T, steps, seed, eps, x0, n_rep, level):
    doc = {"problem": {"example": "jump_ou"},
           "grid": {"T": T, "steps": steps, "x0": [x0]},
           "noise": {"seed": seed, "epsilon": eps},
           "ldp": {"n_rep": n_rep, "level": level}}
    cfg = parse_config(tomli_w.dumps(doc))
    text = emit_config(cfg.sections)
    assert parse_config(text).sections == cfg.sections


# --- commands ---------------------------------------------------------------------


def test_audit_on_strict_example(tmp_path):
    cfg = parse_config(shipped_config("strict"))
    assert run_command("audit", cfg, tmp_path, quiet=True) == 0
    audit = json.loads((tmp_path / "audit.json").read_text())
    assert all(audit["flags"][k] for k in ("H_A", "H1_b_sigma", "H1_f", "H2_f", "H3_f", "H_bsf"))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    validate("manifest", manifest)
    assert manifest["exit_status"] == 0 and "audit.json" in manifest["artifacts"]
    assert manifest["schemas"]["audit"] == "1.0"


def test_simulate_is_byte_identical(tmp_path):
    argv = ["simulate", "--config", str(GOLDEN / "simulate" / "config.toml"), "--quiet"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b and "path_e0_0.csv" in a
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["artifacts"] == mb["artifacts"]
    header = (tmp_path / "a" / "path_e0_0.csv").read_text().splitlines()[0]
    assert header == "t,x_1,x_2,K_var,jump_flag"


def test_seed_override_changes_paths(tmp_path):
    argv = ["simulate", "--config", str(GOLDEN / "simulate" / "config.toml"), "--quiet"]
    main(argv + ["--out", str(tmp_path / "a")])
    main(argv + ["--out", str(tmp_path / "b"), "--seed", "99"])
    assert _files(tmp_path / "a")["path_e0_0.csv"] != _files(tmp_path / "b")["path_e0_0.csv"]
    assert "seed = 99" in (tmp_path / "b" / "resolved_config.toml").read_text()


def test_impossible_event_exits_one(tmp_path, capsys):
    text = """
[problem]
example = "reflected_ramp"
[grid]
T = 1.0
steps = 10
[noise]
epsilon = [0.5, 0.2]
seed = 1
[ldp]
level = -1.0
direction = "le"
n_rep = 1000
"""
    cfg = parse_config(text)
    assert run_command("ldp", cfg, tmp_path) == 1
    report = json.loads((tmp_path / "ldp.json").read_text())
    assert any("rung unusable, advise importance sampling" in n for n in report["notes"])
    assert "rung unusable" in capsys.readouterr().out


def test_configuration_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[problem]\nexample = "ou"\nsigme = 2\n[noise]\nseed = 1\n')
    assert main(["audit", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "sigme" in capsys.readouterr().err
    assert main(["audit", "--config", "no_such_config", "--out", str(tmp_path / "o")]) == 2
    # semantic error raised during the run: yosida grid guard
    text = MINIMAL + "[skeleton]\nh = [0.5]\neta = 1e-4\n"
    cfg = parse_config(text)
    assert run_command("skeleton", cfg, tmp_path / "s", quiet=True) == 2
    manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert manifest["exit_status"] == 2


def test_format_selection(tmp_path):
    argv = ["skeleton", "--config", str(GOLDEN / "skeleton" / "config.toml"), "--quiet"]
    main(argv + ["--out", str(tmp_path / "c"), "--format", "csv"])
    main(argv + ["--out", str(tmp_path / "j"), "--format", "json"])
    assert set(_files(tmp_path / "c")) == {"skeleton.csv", "resolved_config.toml"}
    assert set(_files(tmp_path / "j")) == {"skeleton.json", "resolved_config.toml"}


# --- golden artifacts -------------------------------------------------------------


def _close(a, b, rel=1e-9, abs_=1e-12):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k], rel, abs_) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(_close(x, y, rel, abs_) for x, y in zip(a, b))
    if isinstance(a, float) or isinstance(b, float):
        if isinstance(a, str) or isinstance(b, str):
            return a == b
        return (math.isnan(a) and math.isnan(b)) or math.isclose(a, b, rel_tol=rel, abs_tol=abs_)
    return a == b


def _cell(v):
    try:
        return float(v)
    except ValueError:
        return v


@pytest.mark.parametrize("cmd", sorted(p.name for p in GOLDEN.iterdir() if (p / "config.toml").exists()))
def test_golden_artifacts(cmd, tmp_path):
    ref = GOLDEN / cmd / "artifacts"
    status = main([cmd, "--config", str(GOLDEN / cmd / "config.toml"), "--out", str(tmp_path), "--quiet"])
    expected_status = json.loads((ref / "manifest.json").read_text())["exit_status"]
    assert status == expected_status
    got, want = _files(tmp_path), _files(ref)
    assert got.keys() == want.keys()
    for name, data in want.items():
        if name.endswith(".json"):
            assert _close(json.loads(got[name]), json.loads(data)), name
        elif name.endswith(".csv"):
            a = list(csv.reader(got[name].decode().splitlines()))
            b = list(csv.reader(data.decode().splitlines()))
            assert a[0] == b[0]
            assert _close([[_cell(v) for v in r] for r in a[1:]], [[_cell(v) for v in r] for r in b[1:]]), name
        else:
            assert got[name] == data, name
