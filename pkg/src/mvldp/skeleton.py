"""Deterministic controlled dynamics on a time grid.

The skeleton, the unperturbed flow and the explicit Yosida variant share one
kernel (:func:`mvldp.kernels.euler_paths`) with the stochastic scheme, so the
small-noise limit of :mod:`mvldp.simulate` is exactly the discretization used
here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _codes as C
from .domain import ForcePath, GridPath, contains
from .errors import DimensionError, GridTooCoarseError, ResolventError, SimulationError
from .kernels import euler_paths


def uniform_grid(T, steps):
    if not T > 0:
        raise ValueError("horizon T must be positive")
    if int(steps) < 1:
        raise ValueError("need at least one step")
    return np.linspace(0.0, float(T), int(steps) + 1)


def _as_grid(grid):
    if isinstance(grid, tuple) and len(grid) == 2:
        return uniform_grid(*grid)
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing from 0")
    return t


@dataclass(frozen=True, eq=False)
class Control:
    """Piecewise-constant controls: ``h`` (cells x l) and ``g >= 0`` (cells x marks)."""

    times: np.ndarray
    h: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        t = _as_grid(self.times)
        m = t.size - 1
        h = np.asarray(self.h, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if h.ndim == 1:
            h = h[:, None]
        if g.ndim == 1:
            g = g.reshape(m, -1) if g.size else np.zeros((m, 0))
        if h.shape[0] != m or g.shape[0] != m:
            raise DimensionError(f"controls need {m} rows, got h {h.shape}, g {g.shape}")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("jump control g must be finite and non-negative")
        if not np.all(np.isfinite(h)):
            raise ValueError("Brownian control h must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "h", np.ascontiguousarray(h))
        object.__setattr__(self, "g", np.ascontiguousarray(g))

    @classmethod
    def zero(cls, times, l, n_marks):
        t = _as_grid(times)
        m = t.size - 1
        return cls(t, np.zeros((m, l)), np.ones((m, n_marks)))

    @classmethod
    def constant(cls, times, h, g, l=None, n_marks=None):
        t = _as_grid(times)
        m = t.size - 1
        h = np.atleast_1d(np.asarray(h, dtype=float))
        g = np.atleast_1d(np.asarray(g, dtype=float))
        if l is not None and h.size == 1:
            h = np.full(l, h[0])
        if n_marks is not None and g.size == 1:
            g = np.full(n_marks, g[0])
        return cls(t, np.tile(h, (m, 1)), np.tile(g, (m, 1)))

    @property
    def steps(self):
        return self.times.size - 1

    @property
    def dt(self):
        return np.diff(self.times)

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def N(self):
        """``int |h|^2 dt``, the budget N for which h lies in the ball D1^N."""
        return float(np.sum(self.h ** 2 * self.dt[:, None]))

    def refine(self, substeps):
        """Same control on a grid with every cell split into ``substeps`` cells."""
        s = int(substeps)
        if s < 1:
            raise ValueError("substeps must be >= 1")
        if s == 1:
            return self
        t = self.times
        fine = (t[:-1, None] + np.diff(t)[:, None] * (np.arange(s) / s)[None, :]).ravel()
        fine = np.r_[fine, t[-1]]
        return Control(fine, np.repeat(self.h, s, axis=0), np.repeat(self.g, s, axis=0))

    def matched_to(self, times):
        """Refine onto ``times`` when those split every cell evenly."""
        times = _as_grid(times)
        if times.size == self.times.size and np.allclose(times, self.times, rtol=0, atol=1e-12):
            return self
        m, M = self.steps, times.size - 1
        if M % m == 0:
            fine = self.refine(M // m)
            if np.allclose(fine.times, times, rtol=0, atol=1e-12):
                return Control(times, fine.h, fine.g)
        raise DimensionError(f"control grid ({m} cells, T={self.horizon}) does not "
                             f"refine to the requested grid ({M} cells)")

    def to_dict(self):
        return {"times": self.times.tolist(), "h": self.h.tolist(), "g": self.g.tolist()}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        m = len(data["times"]) - 1
        g = np.asarray(data["g"], dtype=float).reshape(m, -1)
        return cls(data["times"], data["h"], g)


# --- shared kernel driver ---------------------------------------------------


def run_scheme(p, x0s, times, h, jcoef, dW=None, counts=None, eps=0.0, eta=0.0, stride=1):
    """Call the splitting kernel and turn failures into exceptions.

    ``h`` is (nh, m, l) and ``jcoef`` is (nj, m, marks) with nh, nj in {1, n}.
    """
    x0s = np.ascontiguousarray(np.atleast_2d(np.asarray(x0s, dtype=float)))
    if x0s.shape[1] != p.d:
        raise DimensionError(f"initial state must have dimension {p.d}")
    dts = np.ascontiguousarray(np.diff(times))
    nm = len(p.nu)
    noisy = dW is not None
    if dW is None:
        dW = np.zeros((1, 1, p.l))
        counts = np.zeros((1, 1, nm))
    dp, sp, jp, marks, opp = p.packed()
    paths, kvar, status, fail = euler_paths(
        x0s, dts, np.ascontiguousarray(h, dtype=float), np.ascontiguousarray(jcoef, dtype=float),
        np.ascontiguousarray(dW, dtype=float), np.ascontiguousarray(counts, dtype=float),
        float(eps), bool(noisy), float(eta), int(stride), dp, sp, jp, marks, opp)
    bad = np.flatnonzero(status != C.ST_OK)
    if bad.size:
        r = bad[0]
        st, k = int(status[r]), int(fail[r])
        if st == C.ST_NOCONV:
            raise ResolventError(f"resolvent inner solver failed at step {k} (replica {r})", np.nan)
        if st == C.ST_EMPTY:
            raise ResolventError(f"empty domain in resolvent at step {k} (replica {r})", np.nan)
        raise SimulationError(f"non-finite state in replica {r}", step=k)
    return paths, kvar


def predictor(p, states, times, h, jcoef, dW=None, counts=None, eps=0.0):
    """Explicit part ``Y_k`` of the splitting, recomputed from the states X_k."""
    X = states[:-1]
    dt = np.diff(times)[:, None]
    S = p.diffusion.eval_rows(X)
    drift = p.drift.eval_rows(X) + np.einsum("kij,kj->ki", S, h)
    Y = X + drift * dt
    for q, u in enumerate(p.nu.values):
        c = jcoef[:, q] * dt[:, 0]
        if dW is not None:
            c = c + eps * counts[:, q]
        if np.any(c != 0):
            Y += c[:, None] * p.jump.eval_rows(X, u)
    if dW is not None:
        Y += np.sqrt(eps) * np.einsum("kij,kj->ki", S, dW)
    return Y


def skeleton_jcoef(p, g):
    """Per-cell coefficients ``w_i (g - 1)`` of the compensated jump term."""
    return p.nu.weights[None, :] * (g - 1.0)


def _check_start(p, x0):
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != p.d:
        raise DimensionError(f"initial state must have dimension {p.d}")
    if not contains(p.domain, x0):
        raise ValueError(f"initial state {x0.tolist()} is outside the closed domain")
    return x0


def _check_control(p, c):
    if c.h.shape[1] != p.l or c.g.shape[1] != len(p.nu):
        raise DimensionError(f"control shapes h {c.h.shape}, g {c.g.shape} do not match "
                             f"l={p.l}, marks={len(p.nu)}")


# --- public solvers ---------------------------------------------------------


def solve_skeleton(p, x0, c, substeps=1):
    """Controlled skeleton with the resolvent splitting.

    Returns the path and the constraint force ``dK_k = Y_k - X_{k+1}``.
    """
    x0 = _check_start(p, x0)
    _check_control(p, c)
    c = c.refine(substeps)
    jc = skeleton_jcoef(p, c.g)
    paths, _ = run_scheme(p, x0[None, :], c.times, c.h[None], jc[None])
    states = paths[0]
    Y = predictor(p, states, c.times, c.h, jc)
    return GridPath(c.times, states), ForcePath(c.times, Y - states[1:])


def solve_unperturbed(p, x0, grid):
    """Zero-noise flow: the skeleton with ``h = 0`` and ``g = 1``."""
    c = Control.zero(_as_grid(grid), p.l, len(p.nu))
    return solve_skeleton(p, x0, c)[0]


def solve_skeleton_yosida(p, eta, x0, c, substeps=1):
    """Skeleton with ``A`` replaced by its Yosida approximation, explicit Euler."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    x0 = _check_start(p, x0)
    _check_control(p, c)
    c = c.refine(substeps)
    if np.max(c.dt) > eta * (1.0 + 1e-9):  # linspace rounding
        raise GridTooCoarseError(f"grid too coarse for chosen eta: max step {np.max(c.dt):.3g} > eta={eta:.3g}")
    jc = skeleton_jcoef(p, c.g)
    paths, _ = run_scheme(p, x0[None, :], c.times, c.h[None], jc[None], eta=eta)
    return GridPath(c.times, paths[0])


def skeleton_finals(p, x0, times, H, G):
    """Endpoints for a batch of controls: H is (n, m, l), G is (n, m, marks)."""
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    n = H.shape[0]
    jc = p.nu.weights[None, None, :] * (G - 1.0)
    paths, _ = run_scheme(p, np.repeat(x0, n, axis=0), times, H, jc, stride=times.size - 1)
    return paths[:, -1, :]
