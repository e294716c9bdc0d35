"""Problem definition: coefficient presets, mark measure, hypothesis audit."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _codes as C
from . import _vec
from .domain import ConvexDomain, MonotoneOp, contains, yosida_apply
from .errors import DimensionError, HypothesisError

_DRIFT_KINDS = {"linear": C.B_LINEAR, "const": C.B_CONST, "clamp": C.B_CLAMP,
                "tanh": C.B_TANH, "affine_clamp": C.B_AFFINE_CLAMP}
_SIGMA_KINDS = {"const": C.S_CONST, "norm_clamp": C.S_NORM_CLAMP,
                "diag_clamp": C.S_DIAG_CLAMP}
_JUMP_KINDS = {"const": C.F_CONST, "mark_const": C.F_MARK_CONST,
               "linear": C.F_LINEAR, "mark_linear": C.F_MARK_LINEAR,
               "mark_clamp": C.F_MARK_CLAMP, "clamp": C.F_CLAMP}

# allowed parameter names per (role, kind); anything else is rejected
TERM_PARAMS = {
    "drift": {"linear": {"matrix"}, "const": {"value"},
              "clamp": {"coef", "lo", "hi"}, "tanh": {"coef", "scale"},
              "affine_clamp": {"matrix", "offset", "lo", "hi"}},
    "diffusion": {"const": {"matrix"}, "norm_clamp": {"matrix", "cap"},
                  "diag_clamp": {"coef", "cap"}},
    "jump": {"const": {"value"}, "mark_const": {"value"}, "linear": {"matrix"},
             "mark_linear": {"matrix"}, "mark_clamp": {"coef", "lo", "hi"},
             "clamp": {"coef", "lo", "hi"}},
}


def _vector(v, d, name, default=None):
    if v is None:
        if default is None:
            raise HypothesisError(f"missing parameter '{name}'")
        v = default
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return np.full(d, float(a))
    if a.shape != (d,):
        raise DimensionError(f"parameter '{name}' must have length {d}, got {a.shape}")
    return a.copy()


def _matrix(v, rows, cols, name):
    if v is None:
        raise HypothesisError(f"missing parameter '{name}'")
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        if rows != cols:
            raise DimensionError(f"scalar '{name}' needs a square shape, have {rows}x{cols}")
        return float(a) * np.eye(rows)
    a = np.atleast_2d(a)
    if a.shape != (rows, cols):
        raise DimensionError(f"parameter '{name}' must be {rows}x{cols}, got {a.shape}")
    return a.copy()


@dataclass(frozen=True, eq=False)
class Coefficient:
    """Sum of preset terms for one of the roles ``drift``, ``diffusion``, ``jump``."""

    role: str
    d: int
    l: int
    terms: tuple
    _pack: tuple = field(repr=False, default=())

    @classmethod
    def build(cls, role, terms, d, l=1):
        kinds_map = {"drift": _DRIFT_KINDS, "diffusion": _SIGMA_KINDS, "jump": _JUMP_KINDS}[role]
        terms = tuple(dict(t) for t in (terms or ()))
        for t in terms:
            kind = t.get("kind")
            if kind not in kinds_map:
                raise HypothesisError(f"unknown {role} preset {kind!r}; "
                                      f"choose from {sorted(kinds_map)}")
            extra = set(t) - {"kind"} - TERM_PARAMS[role][kind]
            if extra:
                raise HypothesisError(f"unknown parameter(s) {sorted(extra)} for {role} preset {kind!r}")
        obj = cls(role, int(d), int(l), terms)
        object.__setattr__(obj, "_pack", obj._make_pack(kinds_map))
        return obj

    def _make_pack(self, kinds_map):
        d, l, n = self.d, self.l, len(self.terms)
        kinds = np.array([kinds_map[t["kind"]] for t in self.terms], dtype=np.int64)
        inf = np.full(d, np.inf)
        if self.role == "diffusion":
            mats = np.zeros((n, d, l))
            vecs = np.zeros((n, d))
            caps = np.full(n, np.inf)
            for i, t in enumerate(self.terms):
                if "matrix" in TERM_PARAMS["diffusion"][t["kind"]]:
                    mats[i] = _matrix(t.get("matrix"), d, l, "matrix")
                if t["kind"] == "diag_clamp":
                    if d != l:
                        raise DimensionError("diag_clamp diffusion needs d == l")
                    vecs[i] = _vector(t.get("coef"), d, "coef")
                if "cap" in t:
                    caps[i] = float(t["cap"])
                    if not caps[i] > 0:
                        raise HypothesisError("diffusion cap must be positive")
            return (kinds, mats, vecs, caps)
        mats = np.zeros((n, d, d))
        vecs = np.zeros((n, d))
        los = np.tile(-inf, (n, 1))
        his = np.tile(inf, (n, 1))
        scales = np.ones((n, d))
        for i, t in enumerate(self.terms):
            k = t["kind"]
            if "matrix" in t or k in ("linear", "mark_linear", "affine_clamp"):
                mats[i] = _matrix(t.get("matrix"), d, d, "matrix")
            if k in ("const", "mark_const"):
                vecs[i] = _vector(t.get("value"), d, "value")
            elif k in ("clamp", "mark_clamp", "tanh"):
                vecs[i] = _vector(t.get("coef"), d, "coef")
            elif k == "affine_clamp":
                vecs[i] = _vector(t.get("offset"), d, "offset", 0.0)
            if k in ("clamp", "mark_clamp", "affine_clamp"):
                los[i] = _vector(t.get("lo"), d, "lo", -np.inf)
                his[i] = _vector(t.get("hi"), d, "hi", np.inf)
                if np.any(los[i] > his[i]):
                    raise HypothesisError(f"{self.role} preset {k!r} has lo > hi")
            if k == "tanh":
                scales[i] = _vector(t.get("scale"), d, "scale", 1.0)
                if np.any(scales[i] <= 0):
                    raise HypothesisError("tanh scale must be positive")
        if self.role == "drift":
            return (kinds, mats, vecs, los, his, scales)
        return (kinds, mats, vecs, los, his)

    def packed(self):
        return self._pack

    def eval_rows(self, X, u=0.0):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.role == "drift":
            return _vec.drift_rows(self._pack, X)
        if self.role == "diffusion":
            return _vec.sigma_rows(self._pack, X, self.l)
        return _vec.jump_rows(self._pack, X, u)

    def __call__(self, x, u=0.0):
        x = np.asarray(x, dtype=float)
        single = x.ndim <= 1
        out = self.eval_rows(x.reshape(1, -1) if single else x, u)
        return out[0] if single else out

    def lipschitz_bound(self, u=0.0):
        """Crude analytic Lipschitz bound (Frobenius norms for diffusion)."""
        kinds_map = {"drift": _DRIFT_KINDS, "diffusion": _SIGMA_KINDS, "jump": _JUMP_KINDS}[self.role]
        inv = {v: k for k, v in kinds_map.items()}
        total = 0.0
        if self.role == "diffusion":
            kinds, mats, vecs, caps = self._pack
            for t, k in enumerate(kinds):
                name = inv[k]
                if name == "norm_clamp":
                    total += np.linalg.norm(mats[t])
                elif name == "diag_clamp":
                    total += np.max(np.abs(vecs[t]))
            return float(total)
        kinds, mats, vecs = self._pack[:3]
        for t, k in enumerate(kinds):
            name = inv[k]
            if name in ("linear", "affine_clamp"):
                total += np.linalg.norm(mats[t], 2)
            elif name == "mark_linear":
                total += abs(u) * np.linalg.norm(mats[t], 2)
            elif name == "clamp":
                total += np.max(np.abs(vecs[t]))
            elif name == "mark_clamp":
                total += abs(u) * np.max(np.abs(vecs[t]))
            elif name == "tanh":
                total += np.max(np.abs(vecs[t]) / self._pack[5][t])
        return float(total)

    def to_list(self):
        return [_plain(t) for t in self.terms]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in np.asarray(obj, dtype=object).tolist()] if isinstance(obj, np.ndarray) else [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


@dataclass(frozen=True, eq=False)
class MarkMeasure:
    """Finite mark measure ``sum_i w_i delta_{u_i}`` with per-mark bounds L2(u_i)."""

    values: np.ndarray
    weights: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        b = np.asarray(self.bounds, dtype=float).reshape(-1)
        if not (v.size == w.size == b.size):
            raise DimensionError("marks, weights and bounds must have equal length")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise HypothesisError("mark weights must be positive and finite")
        if np.any(b <= 0):
            raise HypothesisError("per-mark bounds L2(u) must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bounds", b)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros(0), np.zeros(0))

    def __len__(self):
        return self.values.size

    @property
    def total_mass(self):
        return float(self.weights.sum())

    @property
    def l2_square_integral(self):
        return float(np.sum(self.weights * self.bounds ** 2))

    def exp_integral(self, gamma2):
        return float(np.sum(self.weights * np.exp(gamma2 * self.bounds ** 2)))


@dataclass(frozen=True)
class Constants:
    L1: float | None = None
    L_sigma: float | None = None
    L3: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None


@dataclass(frozen=True, eq=False)
class Problem:
    d: int
    l: int
    op: MonotoneOp
    drift: Coefficient
    diffusion: Coefficient
    jump: Coefficient
    nu: MarkMeasure
    constants: Constants = Constants()
    regime: str | None = None
    name: str = ""

    @property
    def domain(self):
        return self.op.domain

    def b(self, x):
        return self.drift(x)

    def sigma(self, x):
        return self.diffusion(x)

    def f(self, x, i):
        return self.jump(x, self.nu.values[i])

    def packed(self):
        """Arguments shared by every kernel call: drift, sigma, jump, marks, op."""
        return (self.drift.packed(), self.diffusion.packed(), self.jump.packed(),
                self.nu.values, self.op.packed())

    def spec(self):
        """Plain-data description, the inverse of :func:`build_problem`."""
        out = {"name": self.name, "d": self.d, "l": self.l, "operator": self.op.to_dict(),
               "drift": self.drift.to_list(), "diffusion": self.diffusion.to_list(),
               "jump": self.jump.to_list(),
               "marks": [[float(u), float(w), float(b)] for u, w, b in
                         zip(self.nu.values, self.nu.weights, self.nu.bounds)]}
        out["constants"] = {k: v for k, v in asdict(self.constants).items() if v is not None}
        if self.regime:
            out["regime"] = self.regime
        return out


def compensator_drift(p, x):
    """``sum_i w_i f(x, u_i)``: the per-unit-time drift removed by compensation."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    out = np.zeros_like(X)
    for u, w in zip(p.nu.values, p.nu.weights):
        out += w * p.jump.eval_rows(X, u)
    return out[0] if single else out


def _build_op(spec, d):
    spec = dict(spec or {"kind": "zero"})
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return MonotoneOp.zero(d)
    if kind == "subdiff_indicator":
        dom = dict(spec.get("domain") or {})
        dk = dom.pop("kind", None)
        if dk == "whole_space":
            domain = ConvexDomain.whole_space(dom.pop("dim", d))
        elif dk == "halfline_nonneg":
            domain = ConvexDomain.halfline_nonneg()
        elif dk == "box":
            domain = ConvexDomain.box(dom.pop("lo"), dom.pop("hi"))
        elif dk == "ball":
            domain = ConvexDomain.ball(dom.pop("center", np.zeros(d)), dom.pop("radius"))
        elif dk == "halfspaces":
            domain = ConvexDomain.halfspaces(dom.pop("normals"), dom.pop("offsets"))
        else:
            raise HypothesisError(f"unknown domain preset {dk!r}")
        if dom:
            raise HypothesisError(f"unknown domain parameter(s) {sorted(dom)}")
        if domain.dim != d:
            raise DimensionError(f"domain dimension {domain.dim} != state dimension {d}")
        return MonotoneOp.indicator(domain)
    if kind == "subdiff_convex":
        return MonotoneOp.convex(spec.get("potential", "quadratic"), d,
                                 spec.get("scale", 1.0), spec.get("max_iter", 100))
    raise HypothesisError(f"unknown operator preset {kind!r}")


def _probe_points(domain, seed=12345, n_random=64, radius=3.0):
    d = domain.dim
    pts = [np.zeros(d)]
    for i in range(d):
        for s in (0.5, 1.0, 2.0):
            e = np.zeros(d)
            e[i] = s
            pts += [e, -e]
    pts = np.array(pts)
    rng = np.random.default_rng(seed)
    pts = np.vstack([pts, rng.uniform(-radius, radius, (n_random, d))])
    pts = pts[contains(domain, pts, 0.0)]
    return pts


def check_origin_zero(op, etas=(1e-3, 1e-1, 1.0, 10.0)):
    """Probe ``0 ∈ A(0)``: the origin is in the closed domain and every
    Yosida image of it vanishes. Whether 0 is interior is reported separately."""
    if not contains(op.domain, np.zeros(op.dim), 0.0):
        return False
    return all(np.all(np.abs(yosida_apply(op, eta, np.zeros(op.dim))) <= 1e-12) for eta in etas)


def build_problem(spec):
    """Validate a plain-data problem description and return a :class:`Problem`.

    Recognized keys: ``d``, ``l``, ``operator``, ``drift``, ``diffusion``,
    ``jump`` (lists of preset terms), ``marks`` (``[u, w]`` or ``[u, w, L2]``
    rows), ``constants``, ``regime``, ``name``.
    """
    spec = dict(spec)
    allowed = {"name", "d", "l", "operator", "drift", "diffusion", "jump", "marks",
               "constants", "regime"}
    extra = set(spec) - allowed
    if extra:
        raise HypothesisError(f"unknown problem key(s) {sorted(extra)}")
    d = int(spec.get("d", 1))
    l = int(spec.get("l", d))
    if d < 1 or l < 1:
        raise DimensionError("d and l must be positive")
    op = _build_op(spec.get("operator"), d)
    drift = Coefficient.build("drift", spec.get("drift", ()), d)
    diffusion = Coefficient.build("diffusion", spec.get("diffusion", ()), d, l)
    jump = Coefficient.build("jump", spec.get("jump", ()), d)

    marks = [list(m) for m in spec.get("marks", ())]
    for m in marks:
        if len(m) not in (2, 3):
            raise HypothesisError("each mark is [value, weight] or [value, weight, L2]")
    values = np.array([m[0] for m in marks], dtype=float)
    weights = np.array([m[1] for m in marks], dtype=float)
    if np.any(weights <= 0):
        raise HypothesisError("mark weights must be positive")
    bounds = []
    for m in marks:
        if len(m) == 3:
            bounds.append(float(m[2]))
        else:
            fz = np.linalg.norm(jump(np.zeros(d), m[0]))
            bounds.append(max(jump.lipschitz_bound(m[0]), fz, 1e-12))
    nu = MarkMeasure(values, weights, np.array(bounds))

    cons = spec.get("constants") or {}
    unknown = set(cons) - {"L1", "L_sigma", "L3", "gamma1", "gamma2"}
    if unknown:
        raise HypothesisError(f"unknown constant(s) {sorted(unknown)}")
    constants = Constants(**{k: float(v) for k, v in cons.items()})
    regime = spec.get("regime")
    if regime not in (None, "strict", "empirical"):
        raise HypothesisError(f"regime must be 'strict' or 'empirical', got {regime!r}")

    p = Problem(d, l, op, drift, diffusion, jump, nu, constants, regime,
                str(spec.get("name", "")))

    if not check_origin_zero(op):
        raise HypothesisError("origin not a zero of A (yosida_apply(A, eta, 0) != 0 for some probe eta)")
    if len(nu):
        pts = _probe_points(op.domain)
        for i, u in enumerate(nu.values):
            moved = pts + jump.eval_rows(pts, u)
            bad = ~contains(op.domain, moved)
            if np.any(bad):
                x = pts[np.argmax(bad)]
                raise HypothesisError(
                    f"jump leaves the domain (H1_f): x={x.tolist()}, mark {i}, "
                    f"x + f(x,u) = {(x + jump(x, u)).tolist()}")
    return p


@dataclass
class AuditReport:
    n_samples: int
    radius: float
    seed: int
    lipschitz_drift: float
    lipschitz_diffusion: float
    lipschitz_L1: float
    lipschitz_jump: list
    jump_at_origin: list
    jump_sup: list
    sigma_sup: float
    dissipativity_min: float
    dissipativity_worst_point: list
    dissipativity_min_outside: float | None
    empirical_radius: float
    regime: str
    flags: dict
    violations: dict
    note: str = ("sampling-based audit: a false flag is a genuine counterexample, "
                 "a true flag is only absence of evidence")

    def to_dict(self):
        return _plain(asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)

    @property
    def theorem_flags_ok(self):
        keys = ("H_A", "H1_b_sigma", "H1_f", "H2_f", "H3_f")
        return all(self.flags[k] for k in keys)


def audit_hypotheses(p, n_samples=2000, radius=2.0, rng_seed=0, tol=1e-9,
                     inner_frac=1e-3, empirical_radius=None):
    """Sample-based check of the standing hypotheses on ``domain ∩ ball(0, radius)``."""
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    if not radius > 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(rng_seed)
    X = p.domain.sample(rng, n_samples, radius)
    Xp = p.domain.sample(rng, n_samples, radius)
    dx = np.linalg.norm(X - Xp, axis=1)
    keep = dx > 1e-12
    X1, X2, dx = X[keep], Xp[keep], dx[keep]

    db = np.linalg.norm(p.drift.eval_rows(X1) - p.drift.eval_rows(X2), axis=1)
    S1, S2 = p.diffusion.eval_rows(X1), p.diffusion.eval_rows(X2)
    ds = np.sqrt(np.sum((S1 - S2) ** 2, axis=(1, 2)))
    lip_b = float(np.max(db / dx))
    lip_s = float(np.max(ds / dx))
    lip_1 = float(np.max((db + ds) / dx))

    zero = np.zeros((1, p.d))
    lip_f, f0, fsup = [], [], []
    outside_ok = True
    worst_exit = None
    for u in p.nu.values:
        F1, F2 = p.jump.eval_rows(X1, u), p.jump.eval_rows(X2, u)
        lip_f.append(float(np.max(np.linalg.norm(F1 - F2, axis=1) / dx)))
        f0.append(float(np.linalg.norm(p.jump.eval_rows(zero, u)[0])))
        fsup.append(float(np.max(np.linalg.norm(F1, axis=1))))
        moved = X1 + F1
        bad = ~contains(p.domain, moved)
        if np.any(bad):
            outside_ok = False
            worst_exit = X1[np.argmax(bad)].tolist()

    Sx = p.diffusion.eval_rows(X)
    sig2 = np.sum(Sx ** 2, axis=(1, 2))
    sigma_sup = float(np.sqrt(np.max(sig2)))
    jump2 = np.zeros(len(X))
    for u, w in zip(p.nu.values, p.nu.weights):
        jump2 += w * np.sum(p.jump.eval_rows(X, u) ** 2, axis=1)
    lhs = 2.0 * np.sum(X * p.drift.eval_rows(X), axis=1) + sig2 + jump2
    nx2 = np.sum(X * X, axis=1)
    far = nx2 >= (inner_frac * radius) ** 2
    ratio = -lhs[far] / nx2[far]
    diss_min = float(np.min(ratio)) if ratio.size else math.nan
    worst = X[far][np.argmin(ratio)].tolist() if ratio.size else []
    r_emp = float(empirical_radius if empirical_radius is not None else 0.5 * radius)
    outer = nx2[far] >= r_emp ** 2
    diss_out = float(np.min(ratio[outer])) if np.any(outer) else None

    c = p.constants
    bounds = p.nu.bounds
    flags = {}
    flags["H_A"] = check_origin_zero(p.op)
    flags["origin_interior"] = bool(p.op.domain.interior_contains(np.zeros(p.d)))
    flags["H1_b_sigma"] = bool(np.isfinite(lip_1) and (c.L1 is None or lip_1 <= c.L1 + tol))
    flags["H2_sigma"] = bool(c.L_sigma is None or sigma_sup <= c.L_sigma + tol)
    flags["H1_f"] = outside_ok
    gamma1 = c.gamma1 if c.gamma1 is not None else (float(bounds.max()) if bounds.size else 0.0)
    flags["H2_f"] = bool(
        gamma1 < 1.0
        and (bounds.size == 0 or float(bounds.max()) <= gamma1 + tol)
        and all(lf <= b + tol and z <= b + tol for lf, z, b in zip(lip_f, f0, bounds)))
    flags["H2prime_f"] = bool(flags["H2_f"] and all(s <= b + tol for s, b in zip(fsup, bounds)))
    g2 = c.gamma2 if c.gamma2 is not None else 1.0
    flags["H3_f"] = bool(g2 > 0 and np.isfinite(p.nu.exp_integral(g2)))
    flags["H_bsf"] = bool(diss_min > tol and (c.L3 is None or diss_min >= c.L3 - tol))

    degenerate = (np.sum(p.diffusion.eval_rows(zero) ** 2) == 0.0
                  and all(z == 0.0 for z in f0))
    if flags["H_bsf"] and degenerate:
        regime = "strict"
    elif diss_out is not None and diss_out > tol:
        regime = "empirical"
    else:
        regime = "none"

    violations = {}
    if not flags["H_bsf"] and worst:
        violations["H_bsf"] = worst
    if worst_exit is not None:
        violations["H1_f"] = worst_exit

    return AuditReport(
        n_samples=n_samples, radius=float(radius), seed=int(rng_seed),
        lipschitz_drift=lip_b, lipschitz_diffusion=lip_s, lipschitz_L1=lip_1,
        lipschitz_jump=lip_f, jump_at_origin=f0, jump_sup=fsup, sigma_sup=sigma_sup,
        dissipativity_min=diss_min, dissipativity_worst_point=worst,
        dissipativity_min_outside=diss_out, empirical_radius=r_emp,
        regime=regime, flags=flags, violations=violations)
