"""Convex constraint domains, maximal monotone operators and grid paths.

The operator catalog is deliberately small: the zero operator, normal-cone
operators of the convex domains below (whose resolvent is the Euclidean
projection), and subdifferentials of a few separable convex potentials with
closed-form or Newton-solved proximal maps.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import _codes as C
from .errors import DimensionError, EmptyDomainError, ResolventError
from .kernels import resolvent_rows

GEOM_TOL = 1e-9
ALG_TOL = 1e-12
MAX_HALFSPACES = 12

_DOMAIN_KINDS = {
    "whole_space": C.DOM_WHOLE,
    "halfline_nonneg": C.DOM_HALFLINE,
    "box": C.DOM_BOX,
    "ball": C.DOM_BALL,
    "halfspaces": C.DOM_HALFSPACES,
}
POTENTIALS = {"quadratic": C.PHI_QUADRATIC, "l1": C.PHI_L1, "logcosh": C.PHI_LOGCOSH}


def _vec(x, name="x"):
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if a.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """Closed convex set with non-empty interior.

    Build with the classmethods rather than the constructor.
    """

    kind: str
    dim: int
    lo: np.ndarray
    hi: np.ndarray
    center: np.ndarray
    radius: float
    normals: np.ndarray
    offsets: np.ndarray
    _subsets: tuple = field(default=(), repr=False)

    @classmethod
    def whole_space(cls, d):
        d = int(d)
        if d < 1:
            raise DimensionError("dimension must be positive")
        inf = np.full(d, np.inf)
        return cls("whole_space", d, -inf, inf.copy(), np.zeros(d), np.inf,
                   np.zeros((0, d)), np.zeros(0))

    @classmethod
    def halfline_nonneg(cls):
        return cls("halfline_nonneg", 1, np.zeros(1), np.full(1, np.inf),
                   np.zeros(1), np.inf, np.zeros((0, 1)), np.zeros(0))

    @classmethod
    def box(cls, lo, hi):
        lo, hi = _vec(lo, "lo"), _vec(hi, "hi")
        if lo.shape != hi.shape:
            raise DimensionError("box bounds differ in length")
        if not np.all(lo < hi):
            raise EmptyDomainError("box needs lo < hi componentwise")
        return cls("box", lo.size, lo, hi, 0.5 * (lo + hi), np.inf,
                   np.zeros((0, lo.size)), np.zeros(0))

    @classmethod
    def ball(cls, center, radius):
        center = _vec(center, "center")
        radius = float(radius)
        if not radius > 0:
            raise EmptyDomainError("ball radius must be positive")
        d = center.size
        inf = np.full(d, np.inf)
        return cls("ball", d, -inf, inf.copy(), center, radius,
                   np.zeros((0, d)), np.zeros(0))

    @classmethod
    def halfspaces(cls, normals, offsets):
        """Polytope ``{x : normals @ x <= offsets}``."""
        A = np.atleast_2d(np.asarray(normals, dtype=float))
        c = _vec(offsets, "offsets")
        if A.shape[0] != c.size:
            raise DimensionError("one offset per normal is required")
        if A.shape[0] == 0 or A.shape[0] > MAX_HALFSPACES:
            raise DimensionError(f"between 1 and {MAX_HALFSPACES} halfspaces are supported")
        if np.any(np.linalg.norm(A, axis=1) == 0):
            raise DimensionError("zero normal vector")
        center, r = _chebyshev_center(A, c)
        d = A.shape[1]
        inf = np.full(d, np.inf)
        return cls("halfspaces", d, -inf, inf.copy(), center, np.inf, A, c,
                   _active_subsets(A))

    # --- queries -----------------------------------------------------------

    def packed(self):
        idx, size, ginv = self._subset_arrays()
        return (_DOMAIN_KINDS[self.kind], self.lo, self.hi, self.center,
                float(self.radius), self.normals, self.offsets, idx, size, ginv)

    def _subset_arrays(self):
        d = self.dim
        if not self._subsets:
            return (np.zeros((0, d), dtype=np.int64), np.zeros(0, dtype=np.int64),
                    np.zeros((0, d, d)))
        return self._subsets

    def interior_contains(self, x, margin=GEOM_TOL):
        """True when the closed ball of radius ``margin`` around x is inside."""
        x = _vec(x)
        if self.kind == "whole_space":
            return True
        if self.kind in ("halfline_nonneg", "box"):
            return bool(np.all(x - self.lo > margin) and np.all(self.hi - x > margin))
        if self.kind == "ball":
            return bool(np.linalg.norm(x - self.center) < self.radius - margin)
        slack = self.offsets - self.normals @ x
        return bool(np.all(slack > margin * np.linalg.norm(self.normals, axis=1)))

    def sample(self, rng, n, radius):
        """Uniform draws from ``domain ∩ ball(0, radius)`` by rejection."""
        d = self.dim
        out = []
        got = 0
        tries = 0
        while got < n:
            tries += 1
            if tries > 200:
                raise EmptyDomainError("sampling region domain ∩ ball(0, radius) looks empty")
            k = max(4 * (n - got), 64)
            g = rng.standard_normal((k, d))
            g /= np.linalg.norm(g, axis=1)[:, None]
            pts = g * radius * rng.random(k)[:, None] ** (1.0 / d)
            keep = pts[contains(self, pts, 0.0)]
            out.append(keep)
            got += len(keep)
        return np.concatenate(out)[:n]

    def to_dict(self):
        if self.kind == "whole_space":
            return {"kind": self.kind, "dim": self.dim}
        if self.kind == "halfline_nonneg":
            return {"kind": self.kind}
        if self.kind == "box":
            return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}
        if self.kind == "ball":
            return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}
        return {"kind": self.kind, "normals": self.normals.tolist(),
                "offsets": self.offsets.tolist()}


def _chebyshev_center(A, c):
    norms = np.linalg.norm(A, axis=1)
    d = A.shape[1]
    # maximize r s.t. A x + r |a_i| <= c, 0 <= r <= 1
    res = linprog(np.r_[np.zeros(d), -1.0], A_ub=np.c_[A, norms], b_ub=c,
                  bounds=[(None, None)] * d + [(0.0, 1.0)], method="highs")
    if res.status == 2:
        raise EmptyDomainError("empty domain: halfspace system is infeasible")
    if res.status != 0:
        raise EmptyDomainError(f"empty domain: interior search failed ({res.message})")
    if res.x[-1] <= GEOM_TOL:
        raise EmptyDomainError("empty domain: polytope has no interior point")
    return res.x[:d], res.x[-1]


def _active_subsets(A):
    n, d = A.shape
    rows = []
    for k in range(1, min(d, n) + 1):
        for S in itertools.combinations(range(n), k):
            As = A[list(S)]
            G = As @ As.T
            if np.linalg.matrix_rank(As, tol=1e-10 * np.abs(As).max()) < k:
                continue
            rows.append((S, np.linalg.inv(G)))
    idx = np.full((len(rows), d), -1, dtype=np.int64)
    size = np.zeros(len(rows), dtype=np.int64)
    ginv = np.zeros((len(rows), d, d))
    for r, (S, Gi) in enumerate(rows):
        k = len(S)
        idx[r, :k] = S
        size[r] = k
        ginv[r, :k, :k] = Gi
    return idx, size, ginv


@dataclass(frozen=True, eq=False)
class MonotoneOp:
    """Maximal monotone operator from the preset catalog."""

    kind: str
    dim: int
    domain: ConvexDomain
    potential: str | None = None
    scale: float = 1.0
    max_iter: int = 100

    @classmethod
    def zero(cls, d):
        return cls("zero", int(d), ConvexDomain.whole_space(d))

    @classmethod
    def indicator(cls, domain):
        return cls("subdiff_indicator", domain.dim, domain)

    @classmethod
    def convex(cls, potential, d, scale=1.0, max_iter=100):
        if potential not in POTENTIALS:
            raise ValueError(f"unknown convex potential {potential!r}; "
                             f"choose from {sorted(POTENTIALS)}")
        if not scale > 0:
            raise ValueError("potential scale must be positive")
        return cls("subdiff_convex", int(d), ConvexDomain.whole_space(d),
                   potential, float(scale), int(max_iter))

    def packed(self):
        kind = {"zero": C.OP_ZERO, "subdiff_indicator": C.OP_INDICATOR,
                "subdiff_convex": C.OP_CONVEX}[self.kind]
        phi = POTENTIALS.get(self.potential, 0)
        return (kind, *self.domain.packed(), phi, float(self.scale), int(self.max_iter))

    def potential_value(self, x):
        x = _vec(x)
        if self.kind == "zero":
            return 0.0
        if self.kind == "subdiff_indicator":
            return 0.0 if contains(self.domain, x, GEOM_TOL) else math.inf
        a = self.scale
        if self.potential == "quadratic":
            return 0.5 * a * float(x @ x)
        if self.potential == "l1":
            return a * float(np.abs(x).sum())
        return a * float(np.sum(np.logaddexp(x, -x) - math.log(2.0)))

    def sample_graph(self, rng, n, radius=2.0):
        """Draw pairs ``(x, y)`` with ``y ∈ A(x)``."""
        d = self.dim
        if self.kind == "zero":
            x = rng.uniform(-radius, radius, (n, d))
            return x, np.zeros_like(x)
        if self.kind == "subdiff_indicator":
            z = self.domain.center + rng.uniform(-radius, radius, (n, d))
            if not np.all(np.isfinite(z)):
                z = rng.uniform(-radius, radius, (n, d))
            x = project(self.domain, z)
            y = (z - x) * rng.uniform(0.0, 3.0, (n, 1))
            return x, y
        x = rng.uniform(-radius, radius, (n, d))
        a = self.scale
        if self.potential == "quadratic":
            return x, a * x
        if self.potential == "l1":
            return x, a * np.sign(x)
        return x, a * np.tanh(x)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "subdiff_indicator":
            out["domain"] = self.domain.to_dict()
        elif self.kind == "subdiff_convex":
            out.update(potential=self.potential, scale=self.scale, dim=self.dim)
        else:
            out["dim"] = self.dim
        return out


def _as_rows(x, dim):
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    single = a.ndim == 1
    rows = a.reshape(1, -1) if single else a
    if rows.ndim != 2 or rows.shape[1] != dim:
        raise DimensionError(f"expected dimension {dim}, got shape {a.shape}")
    return np.ascontiguousarray(rows), single


def contains(domain, x, tol=GEOM_TOL):
    """Whether x (or each row of x) lies within distance ``tol`` of the domain."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    rows, single = _as_rows(x, domain.dim)
    z = project(domain, rows)
    ok = np.sqrt(np.sum((z - rows) ** 2, axis=1)) <= tol
    return bool(ok[0]) if single else ok


def project(domain, x):
    """Euclidean projection onto the domain (rows handled independently)."""
    return resolvent(MonotoneOp.indicator(domain), 1.0, x)


def resolvent(op, eta, x):
    """``J_eta(x) = (I + eta A)^{-1} x``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    rows, single = _as_rows(x, op.dim)
    z, status, resid = resolvent_rows(op.packed(), eta, rows)
    if np.any(status == C.ST_EMPTY):
        raise EmptyDomainError("empty domain: no feasible projection found")
    if np.any(status == C.ST_NOCONV):
        raise ResolventError("proximal inner solver did not converge",
                             float(np.max(resid)))
    return z[0] if single else z


def yosida_apply(op, eta, x):
    """Yosida approximation ``A^eta(x) = (x - J_eta(x)) / eta``."""
    x = np.asarray(x, dtype=float)
    return (x - resolvent(op, eta, x)) / eta


def monotone_gap(op, x1, x2, eta):
    """``<x1 - x2, A^eta(x1) - A^eta(x2)>``; non-negative for monotone A."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    g = np.sum((x1 - x2) * (yosida_apply(op, eta, x1) - yosida_apply(op, eta, x2)), axis=-1)
    return float(g) if np.ndim(g) == 0 else g


# --- paths ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridPath:
    """Càdlàg path sampled at grid knots; states are right limits."""

    times: np.ndarray
    states: np.ndarray
    jump_log: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing from 0")
        if s.shape[0] != t.size:
            raise DimensionError("one state per time knot is required")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def final(self):
        return self.states[-1]

    def value_at(self, t):
        """Step (càdlàg) interpolation at the times ``t``."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.states[np.clip(idx, 0, len(self.times) - 1)]

    def in_domain(self, domain, tol=GEOM_TOL):
        return bool(np.all(contains(domain, self.states, tol)))


@dataclass(frozen=True, eq=False)
class ForcePath:
    """Constraint force increments ``dK_k`` on the cells of a GridPath grid."""

    times: np.ndarray
    increments: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim == 1:
            inc = inc[:, None]
        if inc.shape[0] != t.size - 1:
            raise DimensionError("one increment per grid cell is required")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "increments", inc)

    @property
    def cumulative(self):
        """K at the knots, with K_0 = 0."""
        return np.vstack([np.zeros((1, self.increments.shape[1])),
                          np.cumsum(self.increments, axis=0)])

    @property
    def variation(self):
        """Cumulative total variation at the knots."""
        return np.r_[0.0, np.cumsum(np.linalg.norm(self.increments, axis=1))]


def total_variation(k):
    return float(np.sum(np.linalg.norm(k.increments, axis=1)))


def lemma_gap(path, force, x, y):
    """Discrete ``sum_k <X_{k+1} - x, dK_k - y dt_k>`` for one graph pair.

    Each force increment is paired with the post-step state it was computed
    against, so for the resolvent scheme every summand is already >= 0.
    """
    dt = np.diff(path.times)[:, None]
    return float(np.sum((path.states[1:] - x) * (force.increments - np.asarray(y) * dt)))


# --- path metrics -----------------------------------------------------------


def _merged(x, y):
    if not math.isclose(x.horizon, y.horizon, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"paths have different horizons {x.horizon} and {y.horizon}")
    tm = np.union1d(x.times, y.times)
    tm = tm[np.r_[True, np.diff(tm) > 1e-12 * max(1.0, tm[-1])]]
    return tm, x.value_at(tm), y.value_at(tm)


def path_distance(x, y, mode="uniform"):
    """Distance between two grid paths on ``[0, T]``.

    ``uniform`` is the sup distance on the merged grid and bounds the
    Skorokhod metric from above. ``j1_grid`` minimizes the two-term Skorokhod
    cost over time changes that are piecewise linear between merged-grid knots.
    """
    tm, xv, yv = _merged(x, y)
    dist = np.linalg.norm(xv[:, None, :] - yv[None, :, :], axis=2)
    uniform = float(np.max(np.diag(dist)))
    if mode == "uniform":
        return uniform
    if mode != "j1_grid":
        raise ValueError(f"unknown distance mode {mode!r}")
    return _j1_grid(tm, dist, uniform)


def _runs(row):
    """Maximal runs of consecutive True cells as (start, stop) index pairs."""
    out = []
    start = None
    for b, ok in enumerate(row):
        if ok and start is None:
            start = b
        elif not ok and start is not None:
            out.append((start, b))
            start = None
    if start is not None:
        out.append((start, len(row)))
    return out


def _j1_feasible(tm, cell_ok, end_ok, L):
    T = tm[-1]
    tol = 1e-12 * max(1.0, T)
    if not end_ok:
        return False
    lo_s, hi_s = math.exp(-L), math.exp(L)
    reach = [(0.0, 0.0)]
    M = len(tm) - 1
    for i in range(M):
        dt = tm[i + 1] - tm[i]
        nxt = []
        for p, q in cell_ok[i]:
            tp, tq = tm[p], tm[q]
            for a, b in reach:
                s_lo, s_hi = max(a, tp), min(b, tq)
                if s_lo > s_hi or s_lo >= tq - tol:
                    continue
                n_lo = s_lo + lo_s * dt
                if n_lo > tq + tol:
                    continue
                nxt.append((n_lo, min(s_hi + hi_s * dt, tq, T)))
        if not nxt:
            return False
        nxt.sort()
        reach = [nxt[0]]
        for a, b in nxt[1:]:
            if a <= reach[-1][1] + tol:
                reach[-1] = (reach[-1][0], max(reach[-1][1], b))
            else:
                reach.append((a, b))
        reach = [(a, b) for a, b in reach if a <= T + tol]
        if not reach:
            return False
    return any(a <= T + tol and b >= T - tol for a, b in reach)


def _j1_grid(tm, dist, uniform, max_log=30.0):
    M = len(tm) - 1
    best = uniform
    cands = np.unique(np.r_[dist[:M, :M].ravel(), dist[M, M]])
    for D in cands:
        if D >= best:
            break
        cell_ok = [_runs(dist[i, :M] <= D) for i in range(M)]
        end_ok = dist[M, M] <= D
        if not _j1_feasible(tm, cell_ok, end_ok, max_log):
            continue
        lo, hi = 0.0, max_log
        if _j1_feasible(tm, cell_ok, end_ok, 0.0):
            hi = 0.0
        while hi - lo > 1e-12 * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if _j1_feasible(tm, cell_ok, end_ok, mid):
                hi = mid
            else:
                lo = mid
            if D + lo >= best:
                break
        best = min(best, float(D + hi))
    return best
