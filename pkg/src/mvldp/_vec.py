"""Vectorized numpy twins of :mod:`mvldp._loops` (the ``MVLDP_NUMBA=0`` path)."""

import numpy as np

from ._codes import (
    B_AFFINE_CLAMP, B_CLAMP, B_CONST, B_LINEAR, B_TANH,
    DOM_BALL, DOM_BOX, DOM_HALFLINE, DOM_WHOLE,
    F_CLAMP, F_CONST, F_LINEAR, F_MARK_CLAMP, F_MARK_CONST, F_MARK_LINEAR,
    OP_INDICATOR, OP_ZERO,
    PHI_L1, PHI_QUADRATIC,
    S_CONST, S_DIAG_CLAMP, S_NORM_CLAMP,
    ST_EMPTY, ST_NOCONV, ST_NONFINITE, ST_OK,
)
from ._loops import FEAS_TOL, KKT_TOL


def project_rows(dom_kind, lo, hi, center, radius, normals, offsets,
                 sub_idx, sub_size, sub_ginv, X):
    n, d = X.shape
    status = np.zeros(n, dtype=np.int64)
    if dom_kind == DOM_WHOLE:
        return X.copy(), status
    if dom_kind in (DOM_HALFLINE, DOM_BOX):
        return np.clip(X, lo, hi), status
    if dom_kind == DOM_BALL:
        diff = X - center
        r = np.sqrt(np.sum(diff * diff, axis=1))
        # points within rounding of the sphere stay put, so projection is idempotent
        scale = np.where(r > radius * (1.0 + FEAS_TOL), radius / np.where(r > 0, r, 1.0), 1.0)
        return center + diff * scale[:, None], status
    Z = X.copy()
    slack = X @ normals.T - offsets
    infeasible = np.any(slack > FEAS_TOL * (1.0 + np.abs(offsets)), axis=1)
    if not infeasible.any():
        return Z, status
    Xi = X[infeasible]
    best = np.full(Xi.shape[0], np.inf)
    Zi = Xi.copy()
    an = np.sqrt(np.sum(normals * normals, axis=1))
    for s_i in range(sub_idx.shape[0]):
        k = sub_size[s_i]
        idx = sub_idx[s_i, :k]
        A = normals[idx]
        resid = Xi @ A.T - offsets[idx]
        lam = resid @ sub_ginv[s_i, :k, :k].T
        lam_scale = np.max(np.abs(lam), axis=1)
        ok = np.all(lam >= -KKT_TOL * (1.0 + lam_scale)[:, None], axis=1)
        cand = Xi - lam @ A
        cn = np.sqrt(np.sum(cand * cand, axis=1))
        lim = offsets + KKT_TOL * (1.0 + np.abs(offsets) + an * cn[:, None])
        ok &= np.all(cand @ normals.T <= lim, axis=1)
        dist = np.sum((cand - Xi) ** 2, axis=1)
        take = ok & (dist < best)
        best[take] = dist[take]
        Zi[take] = cand[take]
    Z[infeasible] = Zi
    status[np.flatnonzero(infeasible)[~np.isfinite(best)]] = ST_EMPTY
    return Z, status


def _logcosh_prox_rows(X, a, max_iter):
    z = X / (1.0 + a)
    lo_b = np.where(X > 0, X - a, X)
    hi_b = np.where(X > 0, X, X + a)
    tol = 1e-14 * (1.0 + np.abs(X))
    done = (X == 0.0)
    z = np.where(done, 0.0, z)
    for _ in range(max_iter):
        t = np.tanh(z)
        g = z + a * t - X
        done = done | (np.abs(g) <= tol)
        if done.all():
            break
        hi_b = np.where(~done & (g > 0), z, hi_b)
        lo_b = np.where(~done & (g <= 0), z, lo_b)
        zn = z - g / (1.0 + a * (1.0 - t * t))
        bad = (zn <= lo_b) | (zn >= hi_b)
        zn = np.where(bad, 0.5 * (lo_b + hi_b), zn)
        z = np.where(done, z, zn)
    res = np.abs(z + a * np.tanh(z) - X)
    res = np.where(X == 0.0, 0.0, res)
    return z, res, res <= tol


def resolvent_rows(opp, eta, X):
    (op_kind, dom_kind, lo, hi, center, radius, normals, offsets,
     sub_idx, sub_size, sub_ginv, phi_kind, phi_scale, max_iter) = opp
    n = X.shape[0]
    resid = np.zeros(n)
    if op_kind == OP_ZERO:
        return X.copy(), np.zeros(n, dtype=np.int64), resid
    if op_kind == OP_INDICATOR:
        Z, st = project_rows(dom_kind, lo, hi, center, radius, normals,
                             offsets, sub_idx, sub_size, sub_ginv, X)
        return Z, st, resid
    a = eta * phi_scale
    status = np.zeros(n, dtype=np.int64)
    if phi_kind == PHI_QUADRATIC:
        return X / (1.0 + a), status, resid
    if phi_kind == PHI_L1:
        return np.sign(X) * np.maximum(np.abs(X) - a, 0.0), status, resid
    Z, res, conv = _logcosh_prox_rows(X, a, max_iter)
    status[~np.all(conv, axis=1)] = ST_NOCONV
    return Z, status, np.max(res, axis=1)


def drift_rows(dp, X):
    kinds, mats, vecs, los, his, scales = dp
    out = np.zeros_like(X)
    for t, k in enumerate(kinds):
        if k == B_LINEAR:
            out += X @ mats[t].T
        elif k == B_CONST:
            out += vecs[t]
        elif k == B_CLAMP:
            out += vecs[t] * np.clip(X, los[t], his[t])
        elif k == B_TANH:
            out += vecs[t] * np.tanh(X / scales[t])
        elif k == B_AFFINE_CLAMP:
            out += np.clip(X @ mats[t].T + vecs[t], los[t], his[t])
    return out


def sigma_rows(sp, X, l):
    kinds, mats, vecs, caps = sp
    n, d = X.shape
    out = np.zeros((n, d, l))
    for t, k in enumerate(kinds):
        if k == S_CONST:
            out += mats[t]
        elif k == S_NORM_CLAMP:
            c = np.minimum(np.sqrt(np.sum(X * X, axis=1)), caps[t])
            out += mats[t][None, :, :] * c[:, None, None]
        elif k == S_DIAG_CLAMP:
            for i in range(min(d, l)):
                out[:, i, i] += vecs[t, i] * np.clip(X[:, i], -caps[t], caps[t])
    return out


def jump_rows(jp, X, u):
    kinds, mats, vecs, los, his = jp
    out = np.zeros_like(X)
    for t, k in enumerate(kinds):
        if k == F_CONST:
            out += vecs[t]
        elif k == F_MARK_CONST:
            out += u * vecs[t]
        elif k == F_LINEAR:
            out += X @ mats[t].T
        elif k == F_MARK_LINEAR:
            out += u * (X @ mats[t].T)
        elif k == F_MARK_CLAMP:
            out += u * vecs[t] * np.clip(X, los[t], his[t])
        elif k == F_CLAMP:
            out += vecs[t] * np.clip(X, los[t], his[t])
    return out


def euler_paths(x0, dts, h, jcoef, dW, counts, eps, noisy, eta, stride,
                dp, sp, jp, marks, opp):
    n, d = x0.shape
    m = dts.shape[0]
    l = h.shape[2]
    nm = marks.shape[0]
    nrec = m // stride + 1
    paths = np.empty((n, nrec, d))
    kvar = np.zeros(n)
    status = np.zeros(n, dtype=np.int64)
    fail_step = np.full(n, -1, dtype=np.int64)
    sq = np.sqrt(eps)
    X = np.array(x0, dtype=float, copy=True)
    paths[:, 0] = X
    alive = np.ones(n, dtype=bool)
    rec = 1
    for k in range(m):
        dt = dts[k]
        hk = h[:, k, :]
        S = sigma_rows(sp, X, l)
        Y = X + (drift_rows(dp, X) + np.einsum("nij,nj->ni", S, np.broadcast_to(hk, (n, l)))) * dt
        for q in range(nm):
            c = jcoef[:, k, q] * dt
            if noisy:
                c = c + eps * counts[:, k, q]
            c = np.broadcast_to(c, (n,))
            if np.any(c != 0.0):
                Y += c[:, None] * jump_rows(jp, X, marks[q])
        if noisy:
            Y += sq * np.einsum("nij,nj->ni", S, dW[:, k, :])
        if eta > 0.0:
            Z, st, _ = resolvent_rows(opp, eta, X)
            dK = dt * (X - Z) / eta
            Xn = Y - dK
        else:
            Z, st, _ = resolvent_rows(opp, dt, Y)
            dK = Y - Z
            Xn = Z
        st = np.where((st == ST_OK) & ~np.all(np.isfinite(Xn), axis=1), ST_NONFINITE, st)
        newly = alive & (st != ST_OK)
        if newly.any():
            status[newly] = st[newly]
            fail_step[newly] = k
            alive &= ~newly
        kvar += np.where(alive | newly, np.sqrt(np.sum(dK * dK, axis=1)), 0.0)
        X = np.where(alive[:, None], Xn, X)
        if (k + 1) % stride == 0:
            paths[:, rec] = np.where(alive[:, None], X, np.nan)
            rec += 1
    if not alive.all():
        # match the loop kernel: everything after the failing step is nan
        for r in np.flatnonzero(~alive):
            first = fail_step[r] // stride + 1
            paths[r, first:] = np.nan
    return paths, kvar, status, fail_step
