"""Command-line front end: ``mvldp <command> --config run.toml [options]``.

Every command writes its artifacts, the resolved configuration and a
``manifest.json`` (command, seed, wall time, artifact hashes, schema
versions, backend) into the output directory.

Exit status: 0 on success, 1 when a check fails, 2 on a configuration error.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, schemas
from ._accel import backend_name
from .action import ActionOptions, action_value, level_set, minimize_action, quasipotential
from .config import load_config, parse_config
from .errors import (ConfigError, DimensionError, GridTooCoarseError, HypothesisError,
                     MvldpError, TiltError)
from .ldp import (ErgodicSettings, EventSpec, fw_bound_check,
                  invariant_tail_experiment, ldp_ladder, quasipotential_vs_tail)
from .model import audit_hypotheses
from .simulate import SimConfig, path_rows, path_to_csv, path_to_dict, simulate_path, simulate_tilted_path
from .skeleton import Control, solve_skeleton, solve_skeleton_yosida, uniform_grid

COMMANDS = ("audit", "simulate", "skeleton", "action", "quasipotential", "ldp", "invariant")
EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2

# errors that mean the configuration asks for something invalid
_CONFIG_ERRORS = (ConfigError, GridTooCoarseError, TiltError, DimensionError, HypothesisError)


def _plain(obj):
    """JSON-safe copy: numpy to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _dumps(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


class _Writer:
    """Writes artifacts and records their hashes and schemas."""

    def __init__(self, out_dir, fmt, quiet):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.fmt = fmt
        self.quiet = quiet
        self.artifacts = {}
        self.used = set()

    @property
    def csv(self):
        return self.fmt in ("csv", "both")

    @property
    def json(self):
        return self.fmt in ("json", "both")

    def text(self, name, text, schema):
        data = text.encode("utf-8")
        (self.dir / name).write_bytes(data)
        self.artifacts[name] = {"sha256": hashlib.sha256(data).hexdigest(), "schema": schema,
                                "schema_version": schemas.version(schema) if schema else None}
        if schema:
            self.used.add(schema)
        if not self.quiet:
            print(f"wrote {self.dir / name}")

    def json_doc(self, name, obj, schema):
        obj = _plain(obj)
        schemas.validate(schema, obj)
        self.text(name, _dumps(obj), schema)

    def csv_rows(self, name, rows, text, schema):
        schemas.validate_rows(schema, rows)
        self.text(name, text, schema)


def _say(quiet, msg):
    if not quiet:
        print(msg)


def _opts(cfg):
    a = cfg.sections["action"]
    return ActionOptions(
        penalty_schedule=tuple(a["penalty_schedule"]), cells_per_unit=a["cells_per_unit"],
        min_cells=a["min_cells"], max_cells=a["max_cells"], substeps=a["substeps"],
        max_iter=a["max_iter"], fd_step=a["fd_step"], gap_rtol=a["gap_rtol"],
        optimize_g=a["optimize_g"], level_tol=a["level_tol"])


def _x0(cfg):
    return np.asarray(cfg.sections["grid"]["x0"], dtype=float)


def _path_rng(seed, rung, i):
    ss = np.random.SeedSequence(int(seed), spawn_key=(20_000 + rung, i))
    return np.random.Generator(np.random.Philox(ss))


# --- commands -----------------------------------------------------------------------


def _cmd_audit(cfg, w):
    a = cfg.sections["audit"]
    rep = audit_hypotheses(cfg.problem, n_samples=a["n_samples"], radius=a["radius"],
                           rng_seed=cfg.seed, tol=a["tol"], empirical_radius=a.get("empirical_radius"))
    w.json_doc("audit.json", rep.to_dict(), "audit")
    bad = [k for k, v in rep.flags.items() if not v]
    _say(w.quiet, f"audit: regime={rep.regime} false flags={bad or 'none'}")
    return EXIT_OK if rep.theorem_flags_ok else EXIT_CHECK


def _cmd_simulate(cfg, w):
    p, g, s = cfg.problem, cfg.sections["grid"], cfg.sections["simulate"]
    tilt = None
    if "tilt_h" in s or "tilt_g" in s:
        times = uniform_grid(g["T"], g["steps"])
        tilt = Control.constant(times, s.get("tilt_h", [0.0] * p.l), s.get("tilt_g", 1.0),
                                p.l, len(p.nu))
    bundle = []
    for r, eps in enumerate(cfg.epsilons):
        sim = SimConfig(eps, g["T"], g["steps"], cfg.seed, tilt=tilt)
        for i in range(s["n_paths"]):
            rng = _path_rng(cfg.seed, r, i)
            if tilt is None:
                path, force = simulate_path(p, sim, _x0(cfg), rng)
                lw = 0.0
            else:
                path, force, lw = simulate_tilted_path(p, sim, _x0(cfg), rng)
            if w.csv:
                w.csv_rows(f"path_e{r}_{i}.csv", path_rows(path, force), path_to_csv(path, force), "path_row")
            bundle.append({"epsilon": eps, "rung": r, "index": i, "log_weight": lw,
                           **path_to_dict(path, force)})
    if w.json:
        w.json_doc("paths.json", {"epsilon": cfg.epsilons, "paths": bundle,
                                  "tilt": None if tilt is None else tilt.to_dict()}, "path_bundle")
    _say(w.quiet, f"simulate: {len(bundle)} path(s)")
    return EXIT_OK


def _cmd_skeleton(cfg, w):
    p, g, s = cfg.problem, cfg.sections["grid"], cfg.sections["skeleton"]
    times = uniform_grid(g["T"], g["steps"])
    c = Control.constant(times, s["h"], s["g"], p.l, len(p.nu))
    if s["eta"] > 0:
        path, force = solve_skeleton_yosida(p, s["eta"], _x0(cfg), c, s["substeps"])
    else:
        path, force = solve_skeleton(p, _x0(cfg), c, s["substeps"])
    if w.csv:
        w.csv_rows("skeleton.csv", path_rows(path, force), path_to_csv(path, force), "path_row")
    if w.json:
        w.json_doc("skeleton.json", {"control": c.to_dict(), "path": path_to_dict(path, force),
                                     "action": action_value(c, p.nu).to_dict(), "eta": s["eta"],
                                     "substeps": s["substeps"]}, "skeleton")
    _say(w.quiet, f"skeleton: X_T={np.round(path.final, 6).tolist()} |K|={force.variation[-1]:.6g}")
    return EXIT_OK


def _cmd_action(cfg, w):
    p, g, a = cfg.problem, cfg.sections["grid"], cfg.sections["action"]
    opts = _opts(cfg)
    res = minimize_action(p, _x0(cfg), a["target"], g["T"], opts)
    path, force = solve_skeleton(p, _x0(cfg), res.control, opts.substeps)
    if w.csv:
        w.csv_rows("action_path.csv", path_rows(path, force), path_to_csv(path, force), "path_row")
    w.json_doc("action.json", {
        "x0": _x0(cfg), "target": a["target"], "T": g["T"], "control": res.control.to_dict(),
        "action": res.action.to_dict(), "gap": res.gap, "converged": res.converged,
        "iterations": res.iterations, "penalty_schedule": list(res.schedule),
        "message": res.message, "options": opts.to_dict()}, "action_result")
    _say(w.quiet, f"action: {res.action.total:.6g} gap={res.gap:.3g} converged={res.converged}")
    return EXIT_OK if res.converged else EXIT_CHECK


def _cmd_quasipotential(cfg, w):
    p, a = cfg.problem, cfg.sections["action"]
    opts = _opts(cfg)
    q = quasipotential(p, a["target"], a["T_grid"], opts, x0=_x0(cfg))
    w.json_doc("quasipotential.json", {**q.to_dict(), "T_grid": a["T_grid"]}, "quasipotential")
    _say(w.quiet, f"quasipotential: V={q.value:.6g} at T={q.horizon}")
    if "level" in a and "y_grid" in a:
        ls = level_set(p, a["level"], a["y_grid"], a["T_grid"], opts)
        if w.csv:
            w.csv_rows("level_set.csv", ls.rows, ls.to_csv(), "level_set_row")
        if w.json:
            w.json_doc("level_set.json", {"level": ls.level, "rows": ls.rows,
                                          "max_member_radius": ls.max_member_radius,
                                          "bounded": ls.bounded}, "level_set")
        _say(w.quiet, f"level set s={ls.level}: {len(ls.members())} member(s), bounded={ls.bounded}")
    return EXIT_OK if q.finite else EXIT_CHECK


def _ldp_tilt(cfg, target):
    p, g, ld = cfg.problem, cfg.sections["grid"], cfg.sections["ldp"]
    if ld["tilt"] == "constant":
        times = uniform_grid(g["T"], g["steps"])
        return Control.constant(times, ld["tilt_h"], ld["tilt_g"], p.l, len(p.nu)), None
    res = minimize_action(p, _x0(cfg), target, g["T"], _opts(cfg))
    return res.control, res


def _cmd_ldp(cfg, w):
    p, g, ld = cfg.problem, cfg.sections["grid"], cfg.sections["ldp"]
    eps = cfg.epsilons
    if ld["check"] == "ladder":
        if ld["event"] == "endpoint_threshold":
            event = EventSpec.endpoint_threshold(ld["coordinate"], ld["level"], ld["direction"])
        else:
            if ld["direction"] != "ge":
                raise ConfigError("sup_threshold events use direction 'ge'", "ldp.direction")
            event = EventSpec.sup_threshold(ld["coordinate"], ld["level"])
        target = np.zeros(p.d)
        target[ld["coordinate"]] = ld["level"]
        benchmark = ld.get("benchmark")
        tilt = None
        if ld["mode"] == "importance_sampled":
            tilt, res = _ldp_tilt(cfg, target)
            if benchmark is None and res is not None and event.kind == "endpoint_threshold":
                benchmark = res.action.total
        elif benchmark is None and event.kind == "endpoint_threshold":
            try:
                benchmark = minimize_action(p, _x0(cfg), target, g["T"], _opts(cfg)).action.total
            except ValueError:
                benchmark = None  # target outside the domain: no finite-action benchmark
        rep = ldp_ladder(p, _x0(cfg), event, eps, ld["n_rep"], g["T"], g["steps"], cfg.seed,
                         mode=ld["mode"], tilt=tilt, benchmark=benchmark,
                         rel_tol=ld["rel_tol"], abs_tol=ld["abs_tol"])
    else:
        control, _ = _ldp_tilt(cfg, np.asarray(cfg.sections["action"]["target"]))
        mode = ld["mode"]
        rep = fw_bound_check(p, [_x0(cfg)], control, ld["delta"], ld["theta"], eps, ld["n_rep"],
                             g["steps"], cfg.seed, M_prime=ld.get("M_prime"), mode=mode,
                             n_members=ld["n_members"], model_slack=ld["model_slack"],
                             metric=ld["metric"])
    _report(w, "ldp", rep)
    return EXIT_OK if rep.passed else EXIT_CHECK


def _cmd_invariant(cfg, w):
    p, g, iv = cfg.problem, cfg.sections["grid"], cfg.sections["invariant"]
    erg = ErgodicSettings(dt=iv["dt"], burn_in=iv["burn_in"], horizon=iv["horizon"], thin=iv["thin"],
                          n_chains=iv["n_chains"], x0=tuple(g["x0"]))
    if iv["check"] == "tail":
        rep = invariant_tail_experiment(p, cfg.epsilons, iv["r"], iv["beta"], erg, cfg.seed,
                                        iv["model_slack"], iv["min_hits"])
    else:
        a = cfg.sections["action"]
        rep = quasipotential_vs_tail(p, cfg.epsilons, iv["r"], a["T_grid"], _opts(cfg), erg, cfg.seed,
                                     y_grid=a.get("y_grid"), delta=iv["delta"], theta=iv["theta"],
                                     s=iv.get("s"), rate_rtol=iv["rate_rtol"],
                                     model_slack=iv["model_slack"])
    _report(w, "invariant", rep)
    return EXIT_OK if rep.passed else EXIT_CHECK


def _report(w, stem, rep):
    if w.csv:
        w.csv_rows(f"{stem}.csv", rep.rows, rep.to_csv(), "ldp_row")
    if w.json:
        w.json_doc(f"{stem}.json", rep.to_dict(), "ldp_report")
    for note in rep.notes:
        _say(w.quiet, f"note: {note}")
    _say(w.quiet, f"{rep.kind}: {'PASS' if rep.passed else 'FAIL'}")


_DISPATCH = {
    "audit": _cmd_audit, "simulate": _cmd_simulate, "skeleton": _cmd_skeleton,
    "action": _cmd_action, "quasipotential": _cmd_quasipotential, "ldp": _cmd_ldp,
    "invariant": _cmd_invariant,
}


def run_command(cmd, cfg, out_dir=None, fmt=None, quiet=False):
    """Run ``cmd`` on a parsed :class:`RunConfig` and write its artifacts.

    Returns the exit status (0 ok, 1 check failed, 2 configuration error).
    """
    if cmd not in _DISPATCH:
        raise ConfigError(f"unknown command {cmd!r}; choose from {list(COMMANDS)}")
    out = cfg.sections["output"]
    w = _Writer(out_dir or out["dir"], fmt or out["format"], quiet)
    t0 = time.perf_counter()
    w.text("resolved_config.toml", cfg.to_toml(), None)
    try:
        status = _DISPATCH[cmd](cfg, w)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    manifest = {
        "command": cmd, "seed": cfg.seed, "version": __version__, "backend": backend_name(),
        "wall_time_s": round(time.perf_counter() - t0, 6), "exit_status": status,
        "artifacts": w.artifacts,
        "schemas": {k: schemas.version(k) for k in sorted(w.used | {"manifest"})},
    }
    schemas.validate("manifest", manifest)
    (w.dir / "manifest.json").write_text(_dumps(manifest), encoding="utf-8")
    return status


def shipped_config(name):
    """Text of a configuration shipped with the package (``configs/<name>.toml``)."""
    res = resources.files("mvldp") / "configs" / f"{name}.toml"
    if not res.is_file():
        raise ConfigError(f"no such config file or shipped config: {name!r}", "--config")
    return res.read_text(encoding="utf-8")


def shipped_configs():
    root = resources.files("mvldp") / "configs"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".toml"))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="TOML run configuration (a path, or the name of a shipped config)")
    common.add_argument("--seed", type=int, help="overrides noise.seed")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--format", choices=("csv", "json", "both"), help="table format")
    common.add_argument("--quiet", action="store_true", help="no progress output")
    parser = argparse.ArgumentParser(prog="mvldp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mvldp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "audit": "sample-based check of the standing hypotheses",
        "simulate": "simulate sample paths",
        "skeleton": "solve the controlled skeleton equation for a constant control",
        "action": "minimum action to a target over the grid horizon",
        "quasipotential": "quasi-potential of the target (and a grid level set)",
        "ldp": "rare-event ladder or path-space bound check",
        "invariant": "invariant-measure tail experiments",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print("configuration error: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if os.path.exists(args.config):
            cfg = load_config(args.config, seed=args.seed)
        else:
            cfg = parse_config(shipped_config(args.config), seed=args.seed)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run_command(args.command, cfg, args.out, args.format, args.quiet)
    except MvldpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
