"""Stochastic paths: noise synthesis, the resolvent Euler scheme, tilted runs.

Random streams
--------------
Replicas are processed in blocks of ``BLOCK`` paths. Block ``b`` of a run with
seed ``s`` draws from ``Philox(SeedSequence(s, spawn_key=(b,)))``, so results
depend only on (seed, configuration), never on how blocks are scheduled.
Within a block the Brownian increments are drawn first, then the jump counts.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .domain import ForcePath, GridPath, contains
from .errors import DimensionError, HypothesisError, TiltError
from .skeleton import Control, predictor, run_scheme, uniform_grid

BLOCK = 4096


def block_rng(seed, block):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(block),))))


def _seed_from(rng, default):
    """Integer seed from ``None`` (use ``default``), an int, or a Generator."""
    if rng is None:
        return int(default)
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(2 ** 63))
    return int(rng)


def _as_rng(rng, seed=0):
    if rng is None:
        return block_rng(seed, 0)
    if isinstance(rng, np.random.Generator):
        return rng
    return block_rng(int(rng), 0)


@dataclass(frozen=True)
class SimConfig:
    """Noise level, uniform grid on ``[0, T]``, seed and an optional tilt."""

    epsilon: float
    T: float
    steps: int
    seed: int = 0
    tilt: Control | None = None
    scheme: str = "resolvent_step"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if int(self.steps) < 1:
            raise ValueError("steps must be >= 1")
        if self.scheme != "resolvent_step":
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def times(self):
        return uniform_grid(self.T, self.steps)

    @property
    def dt(self):
        return self.T / self.steps

    def with_(self, **kw):
        d = dict(epsilon=self.epsilon, T=self.T, steps=self.steps, seed=self.seed,
                 tilt=self.tilt, scheme=self.scheme)
        d.update(kw)
        return SimConfig(**d)


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """Brownian increments per cell and jump events as ``(time, mark index)``."""

    dW: np.ndarray
    events: tuple


# --- jump events --------------------------------------------------------------


def sample_jump_events(nu, theta, T, rng):
    """Poisson random measure with intensity ``theta dt nu(du)`` on ``(0, T]``."""
    if not theta > 0 or not T > 0:
        raise ValueError("theta and T must be positive")
    rng = _as_rng(rng)
    events = []
    for i, w in enumerate(nu.weights):
        k = rng.poisson(theta * w * T)
        events += [(float(t), i) for t in T - T * rng.random(k)]
    events.sort()
    return events


def sample_controlled_jump_events(nu, zeta, epsilon, T, rng):
    """Thinning realization of intensity ``g(t, u_i) w_i / epsilon``.

    Candidates come from the dominating rate ``max_t g(t, u_i) w_i / epsilon``
    and are kept with probability ``g(cell, i) / max_t g(t, u_i)``.
    """
    g = np.asarray(zeta.g, dtype=float)
    if np.any(g < 0):
        raise ValueError("jump control g has negative entries")
    if not math.isclose(zeta.horizon, T, rel_tol=0, abs_tol=1e-12):
        raise DimensionError(f"control horizon {zeta.horizon} != T={T}")
    rng = _as_rng(rng)
    events = []
    for i, w in enumerate(nu.weights):
        gmax = float(g[:, i].max()) if g.shape[0] else 0.0
        if gmax <= 0:
            continue
        k = rng.poisson(gmax * w * T / epsilon)
        t = T - T * rng.random(k)
        keep = rng.random(k) * gmax < g[_cell_of(zeta.times, t), i]
        events += [(float(s), i) for s in t[keep]]
    events.sort()
    return events


def _cell_of(times, t):
    """Cell k with ``t_k < t <= t_{k+1}``: events there act on ``X_{k+1}``."""
    return np.clip(np.searchsorted(times, t, side="left") - 1, 0, times.size - 2)


def events_to_counts(events, times, n_marks):
    counts = np.zeros((times.size - 1, n_marks))
    for t, i in events:
        counts[_cell_of(times, np.array([t]))[0], i] += 1
    return counts


# --- tilt helpers -------------------------------------------------------------


def _tilt_arrays(p, cfg):
    """(h, g) on the simulation grid; zero tilt when none is configured."""
    times = cfg.times
    m = times.size - 1
    if cfg.tilt is None:
        return np.zeros((m, p.l)), np.ones((m, len(p.nu))), False
    c = cfg.tilt
    if not math.isclose(c.horizon, cfg.T, rel_tol=0, abs_tol=1e-12):
        raise TiltError(f"tilt horizon {c.horizon} differs from T={cfg.T}")
    try:
        c = c.matched_to(times)
    except DimensionError as exc:
        raise TiltError(str(exc)) from None
    if c.h.shape[1] != p.l or c.g.shape[1] != len(p.nu):
        raise TiltError("tilt shapes do not match the problem dimensions")
    return c.h, c.g, True


def _draw(rng, n, dts, l, rates):
    """Brownian increments (n, m, l) and Poisson counts (n, m, marks)."""
    m = dts.size
    dW = rng.standard_normal((n, m, l)) * np.sqrt(dts)[None, :, None]
    counts = rng.poisson(np.broadcast_to(rates * dts[:, None], (n, m, rates.shape[1]))).astype(float)
    return dW, counts


def log_weight(p, cfg, h, g, dW, counts):
    """``log dP/dP~`` for tilted replicas (one value per row of ``dW``)."""
    eps = cfg.epsilon
    dts = np.diff(cfg.times)
    lw = -np.einsum("kj,nkj->n", h, dW) / math.sqrt(eps)
    lw -= np.sum(h * h * dts[:, None]) / (2.0 * eps)
    if g.shape[1]:
        with np.errstate(divide="ignore"):
            lg = np.log(g)
        hit = counts > 0
        if np.any(hit & (g[None] == 0)):
            raise TiltError("jump event in a cell where the tilt intensity g is 0")
        lw -= np.sum(np.where(hit, counts * lg[None], 0.0), axis=(1, 2))
        lw += np.sum((g - 1.0) * p.nu.weights[None, :] * dts[:, None]) / eps
    return lw


# --- single paths -------------------------------------------------------------


def _single(p, cfg, x0, rng, tilted):
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != p.d:
        raise DimensionError(f"initial state must have dimension {p.d}")
    if not contains(p.domain, x0):
        raise ValueError("initial state outside the closed domain")
    rng = _as_rng(rng, cfg.seed)
    times = cfg.times
    dts = np.diff(times)
    if tilted:
        h, g, has_tilt = _tilt_arrays(p, cfg)
    else:
        h, g, has_tilt = np.zeros((dts.size, p.l)), np.ones((dts.size, len(p.nu))), False
    eps = cfg.epsilon
    rates = g * p.nu.weights[None, :] / eps
    dW, counts = _draw(rng, 1, dts, p.l, rates)
    jc = np.broadcast_to(-p.nu.weights[None, :], (dts.size, len(p.nu)))
    paths, _ = run_scheme(p, x0[None], times, h[None], jc[None], dW, counts, eps)
    states = paths[0]
    Y = predictor(p, states, times, h, jc, dW[0], counts[0], eps)
    # event times are uniform within their cell given the counts
    log = []
    for k, q in zip(*np.nonzero(counts[0])):
        ts = np.sort(times[k + 1] - dts[k] * rng.random(int(counts[0, k, q])))
        jump = eps * p.jump(states[k], p.nu.values[q])
        log += [(float(t), int(q), jump.tolist()) for t in ts]
    log.sort(key=lambda e: (e[0], e[1]))
    path = GridPath(times, states, tuple(log))
    force = ForcePath(times, Y - states[1:])
    lw = float(log_weight(p, cfg, h, g, dW, counts)[0]) if has_tilt else 0.0
    return path, force, lw


def simulate_path(p, cfg, x0, rng=None):
    """One path of the constrained jump diffusion (tilt ignored)."""
    path, force, _ = _single(p, cfg, x0, rng, tilted=False)
    return path, force


def simulate_tilted_path(p, cfg, x0, rng=None):
    """One path under the tilt in ``cfg``; returns (path, force, log_weight)."""
    if cfg.tilt is None:
        raise TiltError("simulate_tilted_path needs cfg.tilt")
    return _single(p, cfg, x0, rng, tilted=True)


# --- batches ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Batch:
    """One block of replicas: recorded states (n, K, d), force variation, log weights."""

    times: np.ndarray
    paths: np.ndarray
    kvar: np.ndarray
    log_weight: np.ndarray

    @property
    def final(self):
        return self.paths[:, -1, :]


def iter_batches(p, cfg, x0, n_rep, stride=1, tilted=True, block=BLOCK):
    """Yield :class:`Batch` blocks covering ``n_rep`` replicas.

    ``x0`` may be one state or an (n_rep, d) array of per-replica states.
    """
    x0 = np.asarray(x0, dtype=float)
    per_rep = x0.ndim == 2
    if per_rep and x0.shape[0] != n_rep:
        raise DimensionError("per-replica initial states must have n_rep rows")
    x0 = x0 if per_rep else x0.reshape(1, -1)
    if x0.shape[1] != p.d:
        raise DimensionError(f"initial state must have dimension {p.d}")
    if not np.all(contains(p.domain, x0)):
        raise ValueError("initial state outside the closed domain")
    times = cfg.times
    dts = np.diff(times)
    m = dts.size
    if m % stride:
        raise ValueError("stride must divide the number of steps")
    if tilted:
        h, g, has_tilt = _tilt_arrays(p, cfg)
    else:
        h, g, has_tilt = np.zeros((m, p.l)), np.ones((m, len(p.nu))), False
    eps = cfg.epsilon
    rates = g * p.nu.weights[None, :] / eps
    jc = np.broadcast_to(-p.nu.weights[None, None, :], (1, m, len(p.nu)))
    rec_times = times[::stride]
    for b, start in enumerate(range(0, n_rep, block)):
        n = min(block, n_rep - start)
        rng = block_rng(cfg.seed, b)
        dW, counts = _draw(rng, n, dts, p.l, rates)
        starts = x0[start:start + n] if per_rep else np.repeat(x0, n, axis=0)
        paths, kvar = run_scheme(p, starts, times, h[None], jc, dW, counts, eps, stride=stride)
        lw = log_weight(p, cfg, h, g, dW, counts) if has_tilt else np.zeros(n)
        yield Batch(rec_times, paths, kvar, lw)


def simulate_finals(p, cfg, x0, n_rep, tilted=True):
    """Final states and log weights of ``n_rep`` replicas."""
    finals, lws = [], []
    for bt in iter_batches(p, cfg, x0, n_rep, stride=cfg.steps, tilted=tilted):
        finals.append(bt.final)
        lws.append(bt.log_weight)
    return np.concatenate(finals), np.concatenate(lws)


# --- long runs ----------------------------------------------------------------


def ergodic_sample(p, cfg, x0, burn_in, horizon, thin, rng=None, n_chains=1,
                   segment_steps=20000, audit=None):
    """States recorded every ``thin`` on ``(burn_in, horizon]`` of long runs.

    The step size is ``cfg.T / cfg.steps``. With ``n_chains > 1`` independent
    chains (one per block-stream row) are pooled, chain-major.
    """
    if not horizon > burn_in >= 0:
        raise ValueError("need horizon > burn_in >= 0")
    dt = cfg.dt
    stride = max(1, int(round(thin / dt)))
    if not math.isclose(stride * dt, thin, rel_tol=1e-9):
        raise ValueError(f"thin={thin} must be a multiple of the step {dt}")
    total = stride * int(math.floor(horizon / (stride * dt) + 1e-9))
    first = int(math.ceil(burn_in / dt - 1e-9))
    if audit is not None and not audit.flags.get("H_bsf", False) and audit.regime == "none":
        warnings.warn("dissipativity not established by the audit; samples may not be stationary")
    seed = _seed_from(rng, cfg.seed)
    x = np.repeat(np.asarray(x0, dtype=float).reshape(1, -1), n_chains, axis=0)
    if not np.all(contains(p.domain, x)):
        raise ValueError("initial state outside the closed domain")
    seg = max(stride, (segment_steps // stride) * stride)
    gens = [block_rng(seed, b) for b in range(0, -(-n_chains // BLOCK))]
    eps = cfg.epsilon
    rates = np.ones((1, len(p.nu))) * p.nu.weights[None, :] / eps
    out = []
    done = 0
    while done < total:
        k = min(seg, total - done)
        times = np.arange(k + 1) * dt
        jc = np.broadcast_to(-p.nu.weights[None, None, :], (1, k, len(p.nu)))
        h = np.zeros((1, k, p.l))
        parts = []
        for b, gen in enumerate(gens):
            rows = slice(b * BLOCK, min((b + 1) * BLOCK, n_chains))
            n = rows.stop - rows.start
            dW, counts = _draw(gen, n, np.full(k, dt), p.l, np.broadcast_to(rates, (k, len(p.nu))))
            paths, _ = run_scheme(p, x[rows], times, h, jc, dW, counts, eps, stride=stride)
            parts.append(paths)
        paths = np.concatenate(parts)
        steps_at = done + stride * np.arange(1, paths.shape[1])
        keep = steps_at > first
        out.append(paths[:, 1:][:, keep])
        x = np.ascontiguousarray(paths[:, -1])
        done += k
    return np.concatenate(out, axis=1).reshape(-1, p.d)


def beta_admissible(p, beta):
    """Smallness conditions on beta for the exponential moment bound."""
    c = p.constants
    if c.L3 is None or c.L_sigma is None:
        raise HypothesisError("exponential-moment bound needs constants L3 and L_sigma")
    conds = {
        "2 beta L_sigma^2 <= L3/4": 2 * beta * c.L_sigma ** 2 <= c.L3 / 4 + 1e-15,
        "2 beta int L2^2 dnu <= L3/4": 2 * beta * p.nu.l2_square_integral <= c.L3 / 4 + 1e-15,
        "beta <= 1": beta <= 1.0,
        "beta > 0": beta > 0,
    }
    return conds


def exp_moment_probe(p, cfg, x0, beta, t, n_rep, rng=None):
    """Monte Carlo ``E exp((beta/eps)|X_t|^2)`` and the bound
    ``exp(-L3 t / 4) exp((beta/eps)|x0|^2) + 2``.

    Returns ``(mean, standard_error, bound)``.
    """
    conds = beta_admissible(p, beta)
    bad = [k for k, ok in conds.items() if not ok]
    if bad:
        raise HypothesisError(f"beta={beta} violates: {', '.join(bad)}")
    eps = cfg.epsilon
    steps = max(1, int(round(t / cfg.dt)))
    seed = _seed_from(rng, cfg.seed)
    run = cfg.with_(T=float(t), steps=steps, seed=seed, tilt=None)
    finals, _ = simulate_finals(p, run, x0, n_rep, tilted=False)
    vals = np.exp(beta / eps * np.sum(finals ** 2, axis=1))
    x0 = np.asarray(x0, dtype=float)
    bound = math.exp(-p.constants.L3 * t / 4) * math.exp(beta / eps * float(x0 @ x0)) + 2.0
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_rep)), bound


# --- serialization --------------------------------------------------------------


PATH_COLUMNS_FIXED = ("t", "K_var", "jump_flag")


def path_rows(path, force):
    """Rows ``t, x_1..x_d, K_var, jump_flag`` (jump_flag = events in the cell ending at t)."""
    var = force.variation
    flags = np.zeros(path.times.size, dtype=int)
    for t, _, _ in path.jump_log:
        k = _cell_of(path.times, np.array([t]))[0]
        flags[k + 1] += 1
    rows = []
    for k, t in enumerate(path.times):
        row = {"t": float(t)}
        row.update({f"x_{i + 1}": float(v) for i, v in enumerate(path.states[k])})
        row["K_var"] = float(var[k])
        row["jump_flag"] = int(flags[k])
        rows.append(row)
    return rows


def path_to_csv(path, force):
    buf = io.StringIO()
    cols = ["t"] + [f"x_{i + 1}" for i in range(path.dim)] + ["K_var", "jump_flag"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in path_rows(path, force):
        w.writerow([r[c] if c == "jump_flag" else f"{r[c]:.12g}" for c in cols])
    return buf.getvalue()


def path_to_dict(path, force):
    return {"times": path.times.tolist(), "states": path.states.tolist(),
            "force_increments": force.increments.tolist(),
            "jump_log": [{"t": t, "mark": q, "jump": j} for t, q, j in path.jump_log]}


def path_to_json(path, force):
    return json.dumps(path_to_dict(path, force), sort_keys=True)
