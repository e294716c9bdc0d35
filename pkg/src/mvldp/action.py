"""Action functional, minimum-action search and the quasi-potential.

Controls are piecewise constant on a uniform grid. The action of a control is
``0.5 sum |h_k|^2 dt_k + sum_k dt_k sum_i w_i ell(g_{k,i})`` and is computed
exactly; the endpoint constraint is relaxed by a quadratic penalty whose
weight grows geometrically over rounds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .domain import contains
from .errors import DimensionError
from .skeleton import Control, skeleton_finals, solve_skeleton, uniform_grid

LOG_G_BOUND = 20.0


def ell(r):
    """``r log r - r + 1`` with ``ell(0) = 1``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("ell is defined for r >= 0 only")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)) - r + 1.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ActionValue:
    brownian_cost: float
    jump_cost: float

    @property
    def total(self):
        return self.brownian_cost + self.jump_cost

    def to_dict(self):
        return {"brownian_cost": self.brownian_cost, "jump_cost": self.jump_cost,
                "total": self.total}


def action_value(c, nu):
    """Exact cost of a piecewise-constant control."""
    dt = c.dt
    bc = 0.5 * float(np.sum(c.h ** 2 * dt[:, None]))
    if c.g.shape[1] != len(nu):
        raise DimensionError("control g has the wrong number of marks")
    jc = float(np.sum(dt[:, None] * nu.weights[None, :] * ell(c.g))) if len(nu) else 0.0
    return ActionValue(bc, jc)


def endpoint_objective(p, x0, y, c, mu_pen, substeps=1):
    """``action + mu_pen |X_T - y|^2`` for the skeleton steered by ``c``."""
    if mu_pen < 0:
        raise ValueError("mu_pen must be non-negative")
    path, _ = solve_skeleton(p, x0, c, substeps)
    gap = path.final - np.asarray(y, dtype=float)
    return action_value(c, p.nu).total + mu_pen * float(gap @ gap)


@dataclass(frozen=True)
class ActionOptions:
    """Optimizer settings.

    Attributes
    ----------
    penalty_schedule : penalty weights, one optimizer round each
    cells_per_unit : control cells per unit time (clipped to [min_cells, max_cells])
    substeps : skeleton steps per control cell
    max_iter : L-BFGS-B iterations per round
    fd_step : central-difference step for the endpoint Jacobian
    gap_rtol : acceptance gap is ``gap_rtol * (1 + |y|)``
    optimize_g : whether jump intensities are free (else fixed at 1)
    """

    penalty_schedule: tuple = (10.0, 1e2, 1e3, 1e4)
    cells_per_unit: float = 20.0
    min_cells: int = 10
    max_cells: int = 200
    substeps: int = 5
    max_iter: int = 500
    fd_step: float = 1e-6
    gap_rtol: float = 1e-3
    optimize_g: bool = True
    horizon_rtol: float = 0.01
    level_tol: float = 0.02

    def cells(self, T):
        return int(min(self.max_cells, max(self.min_cells, round(self.cells_per_unit * T))))

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class ActionResult:
    control: Control
    action: ActionValue
    path: object
    gap: float
    converged: bool
    iterations: int
    schedule: tuple
    message: str = ""

    def __iter__(self):
        return iter((self.control, self.action, self.path))


class _Problem:
    """Packs (h, log g) into one vector and evaluates objective and gradient."""

    def __init__(self, p, x0, y, times, opts):
        self.p, self.x0, self.y = p, np.asarray(x0, float), np.asarray(y, float)
        self.coarse = times
        self.opts = opts
        self.m = times.size - 1
        self.l = p.l
        self.nm = len(p.nu) if opts.optimize_g else 0
        self.dt = np.diff(times)
        s = opts.substeps
        self.fine = Control.zero(times, p.l, len(p.nu)).refine(s).times
        self.nh = self.m * self.l

    def split(self, z):
        h = z[:self.nh].reshape(self.m, self.l)
        if self.nm:
            g = np.exp(z[self.nh:].reshape(self.m, self.nm))
        else:
            g = np.ones((self.m, len(self.p.nu)))
        return h, g

    def pack(self, c):
        parts = [c.h.ravel()]
        if self.nm:
            parts.append(np.clip(np.log(np.maximum(c.g, 1e-300)), -LOG_G_BOUND, LOG_G_BOUND).ravel())
        return np.concatenate(parts)

    def control(self, z):
        h, g = self.split(z)
        return Control(self.coarse, h, g)

    def action_and_grad(self, z):
        h, g = self.split(z)
        w = self.p.nu.weights
        dt = self.dt[:, None]
        a = 0.5 * np.sum(h * h * dt)
        grad = [(h * dt).ravel()]
        if len(w):
            a += np.sum(dt * w[None, :] * ell(g))
        if self.nm:
            # d/d(log g) of w ell(g) = w g log g
            grad.append((dt * w[None, :] * g * np.log(g)).ravel())
        return float(a), np.concatenate(grad)

    def finals(self, Z):
        """Skeleton endpoints for a batch of packed vectors (rows of Z)."""
        s = self.opts.substeps
        n = Z.shape[0]
        H = Z[:, :self.nh].reshape(n, self.m, self.l)
        if self.nm:
            G = np.exp(Z[:, self.nh:].reshape(n, self.m, self.nm))
        else:
            G = np.ones((n, self.m, len(self.p.nu)))
        return skeleton_finals(self.p, self.x0, self.fine,
                               np.repeat(H, s, axis=1), np.repeat(G, s, axis=1))

    def endpoint_jacobian(self, z):
        """X_T(z) and its Jacobian by batched central differences."""
        k = z.size
        step = self.opts.fd_step * np.maximum(1.0, np.abs(z))
        Z = np.repeat(z[None, :], 2 * k + 1, axis=0)
        idx = np.arange(k)
        Z[1 + idx, idx] += step
        Z[1 + k + idx, idx] -= step
        F = self.finals(Z)
        J = (F[1:k + 1] - F[k + 1:]) / (2.0 * step)[:, None]
        return F[0], J.T

    def objective(self, z, mu):
        a, ga = self.action_and_grad(z)
        xt, J = self.endpoint_jacobian(z)
        r = xt - self.y
        return a + mu * float(r @ r), ga + 2.0 * mu * (J.T @ r)

    def gap(self, z):
        return float(np.linalg.norm(self.finals(z[None, :])[0] - self.y))


def _bounds(prob):
    b = [(None, None)] * prob.nh
    b += [(-LOG_G_BOUND, LOG_G_BOUND)] * (prob.nm * prob.m)
    return b


def objective_gradient(p, x0, y, c, mu_pen, opts=None):
    """Penalized objective and gradient in the packed (h, log g) coordinates."""
    opts = opts or ActionOptions()
    prob = _Problem(p, x0, y, c.times, opts)
    z = prob.pack(c)
    return prob.objective(z, mu_pen), z, (lambda v: prob.objective(v, mu_pen)[0])


def minimize_action(p, x0, y, T, opts=None, init=None):
    """Minimum action over controls steering ``x0`` to ``y`` at time ``T``.

    Quasi-Newton (L-BFGS-B) on ``(h, log g)`` with ``log g`` boxed to
    ``[-20, 20]``, one round per penalty weight, warm-started from the
    previous round. Returns an :class:`ActionResult` that also unpacks as
    ``(control, action, path)``.
    """
    opts = opts or ActionOptions()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != p.d or x0.size != p.d:
        raise DimensionError(f"x0 and y must have dimension {p.d}")
    if not contains(p.domain, y):
        raise ValueError("target y must lie in the closed domain")
    times = uniform_grid(T, opts.cells(T))
    prob = _Problem(p, x0, y, times, opts)
    if init is None:
        init = Control.zero(times, p.l, len(p.nu))
    elif init.steps != prob.m or not math.isclose(init.horizon, T):
        raise DimensionError("initial control does not live on the optimizer grid")
    z = prob.pack(init)
    tol = opts.gap_rtol * (1.0 + float(np.linalg.norm(y)))
    iters = 0
    msg = ""
    bounds = _bounds(prob)
    for mu in opts.penalty_schedule:
        res = minimize(prob.objective, z, args=(mu,), jac=True, method="L-BFGS-B",
                       bounds=bounds, options={"maxiter": opts.max_iter, "ftol": 1e-15, "gtol": 1e-10})
        z = res.x
        iters += int(res.nit)
        msg = str(res.message)
    c = prob.control(z)
    path, _ = solve_skeleton(p, x0, c, opts.substeps)
    gap = float(np.linalg.norm(path.final - y))
    return ActionResult(c, action_value(c, p.nu), path, gap, gap <= tol, iters,
                        tuple(opts.penalty_schedule), msg if gap <= tol else "not converged: " + msg)


def _shift_warm_start(prev, times):
    """Previous optimum placed at the end of a longer horizon, zero before it."""
    T_new = float(times[-1])
    T_old = prev.horizon
    mid = 0.5 * (times[:-1] + times[1:])
    src = mid - (T_new - T_old)
    k = np.searchsorted(prev.times, src, side="right") - 1
    inside = (src >= 0) & (k < prev.steps)
    k = np.clip(k, 0, prev.steps - 1)
    h = np.where(inside[:, None], prev.h[k], 0.0)
    g = np.where(inside[:, None], prev.g[k], 1.0)
    return Control(times, h, g)


@dataclass
class QuasiPotentialResult:
    target: np.ndarray
    value: float
    horizon: float | None
    control: Control | None
    gap: float
    iterations: int
    schedule: tuple
    per_horizon: list = field(default_factory=list)
    start: np.ndarray | None = None

    @property
    def finite(self):
        return math.isfinite(self.value)

    def to_dict(self):
        return {
            "target": np.asarray(self.target).tolist(),
            "start": None if self.start is None else np.asarray(self.start).tolist(),
            "value": self.value if self.finite else "inf",
            "horizon": self.horizon,
            "control": None if self.control is None else self.control.to_dict(),
            "gap": self.gap,
            "iterations": self.iterations,
            "penalty_schedule": list(self.schedule),
            "per_horizon": self.per_horizon,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def quasipotential(p, y, T_grid, opts=None, x0=None):
    """``min_T`` of the fixed-horizon minimum action from ``x0`` (default 0).

    Horizons are visited in increasing order, each warm-started from the
    previous optimum. Horizons whose endpoint gap misses the tolerance are
    discarded; if none remain the value is ``+inf``.
    """
    opts = opts or ActionOptions()
    T_grid = [float(T) for T in T_grid]
    if not T_grid:
        raise ValueError("T_grid must not be empty")
    if any(b <= a for a, b in zip(T_grid, T_grid[1:])):
        raise ValueError("T_grid must be increasing")
    y = np.asarray(y, dtype=float).reshape(-1)
    x0 = np.zeros(p.d) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    rows, results = [], []
    prev = None
    for T in T_grid:
        times = uniform_grid(T, opts.cells(T))
        init = _shift_warm_start(prev, times) if prev is not None else None
        r = minimize_action(p, x0, y, T, opts, init=init)
        results.append(r)
        rows.append({"T": T, "action": r.action.total, "gap": r.gap, "converged": r.converged})
        prev = r.control
    ok = [r for r in results if r.converged]
    iters = sum(r.iterations for r in results)
    if not ok:
        best = min(results, key=lambda r: r.gap)
        return QuasiPotentialResult(y, math.inf, None, None, best.gap, iters,
                                    tuple(opts.penalty_schedule), rows, x0)
    vmin = min(r.action.total for r in ok)
    lim = vmin * (1.0 + opts.horizon_rtol) + 1e-12
    for T, r in zip(T_grid, results):
        if r.converged and r.action.total <= lim:
            return QuasiPotentialResult(y, r.action.total, T, r.control, r.gap, iters,
                                        tuple(opts.penalty_schedule), rows, x0)
    raise AssertionError("unreachable")


def start_ladder(p, y, radii, T_grid, opts=None, direction=None):
    """Quasi-potential from starts ``r * direction`` for shrinking ``r``.

    For degenerate problems where the origin is frozen, this exposes the
    behaviour of the value as the start approaches 0. ``direction`` defaults
    to ``y / |y|``.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if direction is None:
        n = np.linalg.norm(y)
        direction = y / n if n > 0 else np.eye(p.d)[0]
    direction = np.asarray(direction, dtype=float)
    return [(float(r), quasipotential(p, y, T_grid, opts, x0=r * direction)) for r in radii]


@dataclass
class LevelSetResult:
    level: float
    rows: list
    max_member_radius: float
    bounded: bool

    def members(self):
        return [np.asarray(r["y"]) for r in self.rows if r["member"]]

    def to_csv(self):
        d = len(self.rows[0]["y"]) if self.rows else 1
        lines = [",".join([f"y_{i + 1}" for i in range(d)] + ["V", "member"])]
        for r in self.rows:
            v = f"{r['V']:.12g}" if math.isfinite(r["V"]) else "inf"
            lines.append(",".join([f"{c:.12g}" for c in r["y"]] + [v, str(int(r["member"]))]))
        return "\n".join(lines) + "\n"


def level_set(p, s, y_grid, T_grid, opts=None):
    """Grid surrogate of ``{y : V(y) <= s}``.

    ``member`` is ``V <= s + level_tol``. ``bounded`` reports whether some
    grid point beyond the farthest member is a non-member, i.e. membership
    dies out inside the grid.
    """
    if s < 0:
        raise ValueError("level s must be non-negative")
    opts = opts or ActionOptions()
    rows = []
    for y in y_grid:
        q = quasipotential(p, y, T_grid, opts)
        rows.append({"y": np.asarray(y, dtype=float).reshape(-1).tolist(), "V": q.value,
                     "member": bool(q.value <= s + opts.level_tol)})
    radii = np.array([np.linalg.norm(r["y"]) for r in rows])
    mem = np.array([r["member"] for r in rows])
    rmax = float(radii[mem].max()) if mem.any() else 0.0
    bounded = bool(np.any(~mem & (radii > rmax)))
    return LevelSetResult(float(s), rows, rmax, bounded)
