"""Loop kernels compiled with numba.

Everything here works on plain arrays and the packed tuples built by
:mod:`mvldp.domain` (operators) and :mod:`mvldp.model` (coefficients). The
vectorized twins live in :mod:`mvldp._vec`; both must agree to rounding.
"""

import math

import numpy as np

from ._accel import njit
from ._codes import (
    B_AFFINE_CLAMP, B_CLAMP, B_CONST, B_LINEAR, B_TANH,
    DOM_BALL, DOM_BOX, DOM_HALFLINE, DOM_WHOLE,
    F_CLAMP, F_CONST, F_LINEAR, F_MARK_CLAMP, F_MARK_CONST, F_MARK_LINEAR,
    OP_INDICATOR, OP_ZERO,
    PHI_L1, PHI_QUADRATIC,
    S_CONST, S_DIAG_CLAMP, S_NORM_CLAMP,
    ST_EMPTY, ST_NOCONV, ST_NONFINITE, ST_OK,
)

FEAS_TOL = 1e-12
KKT_TOL = 1e-10


@njit(_nrt=False)
def project_into(dom_kind, lo, hi, center, radius, normals, offsets,
                 sub_idx, sub_size, sub_ginv, x, z, work):
    """Projection of ``x`` written into ``z``; ``work`` is (3, d) scratch."""
    d = x.shape[0]
    for i in range(d):
        z[i] = x[i]
    if dom_kind == DOM_WHOLE:
        return ST_OK
    if dom_kind == DOM_HALFLINE or dom_kind == DOM_BOX:
        for i in range(d):
            if z[i] < lo[i]:
                z[i] = lo[i]
            elif z[i] > hi[i]:
                z[i] = hi[i]
        return ST_OK
    if dom_kind == DOM_BALL:
        r2 = 0.0
        for i in range(d):
            r2 += (x[i] - center[i]) ** 2
        r = math.sqrt(r2)
        if r > radius * (1.0 + FEAS_TOL):  # within rounding of the sphere: unchanged
            s = radius / r
            for i in range(d):
                z[i] = center[i] + s * (x[i] - center[i])
        return ST_OK
    # halfspace intersection {a_i . z <= c_i}
    n = offsets.shape[0]
    feasible = True
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += normals[i, j] * x[j]
        if s > offsets[i] + FEAS_TOL * (1.0 + abs(offsets[i])):
            feasible = False
            break
    if feasible:
        return ST_OK
    best = np.inf
    found = False
    cand = work[0]
    resid = work[1]
    lam = work[2]
    for s_i in range(sub_idx.shape[0]):
        k = sub_size[s_i]
        for q in range(k):
            a = sub_idx[s_i, q]
            s = 0.0
            for j in range(d):
                s += normals[a, j] * x[j]
            resid[q] = s - offsets[a]
        ok = True
        lam_scale = 0.0
        for q in range(k):
            s = 0.0
            for p in range(k):
                s += sub_ginv[s_i, q, p] * resid[p]
            lam[q] = s
            lam_scale = max(lam_scale, abs(s))
        for q in range(k):
            if lam[q] < -KKT_TOL * (1.0 + lam_scale):
                ok = False
        if not ok:
            continue
        for j in range(d):
            cand[j] = x[j]
        for q in range(k):
            a = sub_idx[s_i, q]
            for j in range(d):
                cand[j] -= lam[q] * normals[a, j]
        cn = 0.0
        for j in range(d):
            cn += cand[j] * cand[j]
        cn = math.sqrt(cn)
        for i in range(n):
            s = 0.0
            an = 0.0
            for j in range(d):
                s += normals[i, j] * cand[j]
                an += normals[i, j] * normals[i, j]
            if s > offsets[i] + KKT_TOL * (1.0 + abs(offsets[i]) + math.sqrt(an) * cn):
                ok = False
                break
        if not ok:
            continue
        dist = 0.0
        for j in range(d):
            dist += (cand[j] - x[j]) ** 2
        if dist < best:
            best = dist
            found = True
            for j in range(d):
                z[j] = cand[j]
    if not found:
        return ST_EMPTY
    return ST_OK


@njit(_nrt=False)
def _logcosh_prox(xi, a, max_iter):
    # solve z + a*tanh(z) = xi; root lies between xi - a*sign(xi) and xi
    if xi == 0.0:
        return 0.0, 0.0, True
    if xi > 0.0:
        lo_b = xi - a
        hi_b = xi
    else:
        lo_b = xi
        hi_b = xi + a
    z = xi / (1.0 + a)
    tol = 1e-14 * (1.0 + abs(xi))
    for _ in range(max_iter):
        t = math.tanh(z)
        g = z + a * t - xi
        if abs(g) <= tol:
            return z, abs(g), True
        if g > 0.0:
            hi_b = z
        else:
            lo_b = z
        zn = z - g / (1.0 + a * (1.0 - t * t))
        if zn <= lo_b or zn >= hi_b:
            zn = 0.5 * (lo_b + hi_b)
        z = zn
    g = z + a * math.tanh(z) - xi
    return z, abs(g), abs(g) <= tol


@njit(_nrt=False)
def resolvent_into(opp, eta, x, z, work):
    """``J_eta(x)`` written into ``z``; returns (status, inner residual)."""
    (op_kind, dom_kind, lo, hi, center, radius, normals, offsets,
     sub_idx, sub_size, sub_ginv, phi_kind, phi_scale, max_iter) = opp
    d = x.shape[0]
    if op_kind == OP_ZERO:
        for i in range(d):
            z[i] = x[i]
        return ST_OK, 0.0
    if op_kind == OP_INDICATOR:
        st = project_into(dom_kind, lo, hi, center, radius, normals,
                          offsets, sub_idx, sub_size, sub_ginv, x, z, work)
        return st, 0.0
    a = eta * phi_scale
    if phi_kind == PHI_QUADRATIC:
        for i in range(d):
            z[i] = x[i] / (1.0 + a)
        return ST_OK, 0.0
    if phi_kind == PHI_L1:
        for i in range(d):
            if x[i] > a:
                z[i] = x[i] - a
            elif x[i] < -a:
                z[i] = x[i] + a
            else:
                z[i] = 0.0
        return ST_OK, 0.0
    worst = 0.0
    st = ST_OK
    for i in range(d):
        zi, res, conv = _logcosh_prox(x[i], a, max_iter)
        z[i] = zi
        if res > worst:
            worst = res
        if not conv:
            st = ST_NOCONV
    return st, worst


@njit
def resolvent_rows(opp, eta, X):
    n, d = X.shape
    out = np.empty((n, d))
    status = np.zeros(n, dtype=np.int64)
    resid = np.zeros(n)
    work = np.empty((3, d))
    resolvent_rows_into(opp, eta, X, out, status, resid, work)
    return out, status, resid


@njit(_nrt=False)
def resolvent_rows_into(opp, eta, X, Z, status, resid, work):
    """Row-wise ``J_eta``; simple operators are looped here, others per row."""
    (op_kind, dom_kind, lo, hi, center, radius, normals, offsets,
     sub_idx, sub_size, sub_ginv, phi_kind, phi_scale, max_iter) = opp
    n, d = X.shape
    for r in range(n):
        status[r] = ST_OK
        resid[r] = 0.0
    if op_kind == OP_ZERO or (op_kind == OP_INDICATOR and dom_kind == DOM_WHOLE):
        for r in range(n):
            for i in range(d):
                Z[r, i] = X[r, i]
        return
    if op_kind == OP_INDICATOR and (dom_kind == DOM_HALFLINE or dom_kind == DOM_BOX):
        for r in range(n):
            for i in range(d):
                v = X[r, i]
                if v < lo[i]:
                    v = lo[i]
                elif v > hi[i]:
                    v = hi[i]
                Z[r, i] = v
        return
    if op_kind == OP_INDICATOR and dom_kind == DOM_BALL:
        for r in range(n):
            r2 = 0.0
            for i in range(d):
                r2 += (X[r, i] - center[i]) ** 2
            rr = math.sqrt(r2)
            if rr > radius * (1.0 + FEAS_TOL):
                sc = radius / rr
                for i in range(d):
                    Z[r, i] = center[i] + sc * (X[r, i] - center[i])
            else:
                for i in range(d):
                    Z[r, i] = X[r, i]
        return
    if op_kind != OP_INDICATOR and phi_kind == PHI_QUADRATIC:
        a = eta * phi_scale
        for r in range(n):
            for i in range(d):
                Z[r, i] = X[r, i] / (1.0 + a)
        return
    for r in range(n):
        st, res = resolvent_into(opp, eta, X[r], Z[r], work)
        status[r] = st
        resid[r] = res


@njit(_nrt=False)
def drift_rows_into(dp, X, out):
    kinds, mats, vecs, los, his, scales = dp
    n, d = X.shape
    for r in range(n):
        for i in range(d):
            out[r, i] = 0.0
    for t in range(kinds.shape[0]):
        k = kinds[t]
        for r in range(n):
            if k == B_LINEAR:
                for i in range(d):
                    s = 0.0
                    for j in range(d):
                        s += mats[t, i, j] * X[r, j]
                    out[r, i] += s
            elif k == B_CONST:
                for i in range(d):
                    out[r, i] += vecs[t, i]
            elif k == B_CLAMP:
                for i in range(d):
                    out[r, i] += vecs[t, i] * min(max(X[r, i], los[t, i]), his[t, i])
            elif k == B_TANH:
                for i in range(d):
                    out[r, i] += vecs[t, i] * math.tanh(X[r, i] / scales[t, i])
            elif k == B_AFFINE_CLAMP:
                for i in range(d):
                    s = vecs[t, i]
                    for j in range(d):
                        s += mats[t, i, j] * X[r, j]
                    out[r, i] += min(max(s, los[t, i]), his[t, i])


@njit(_nrt=False)
def sigma_rows_into(sp, X, out):
    kinds, mats, vecs, caps = sp
    n, d = X.shape
    l = out.shape[2]
    for r in range(n):
        for i in range(d):
            for j in range(l):
                out[r, i, j] = 0.0
    for t in range(kinds.shape[0]):
        k = kinds[t]
        for r in range(n):
            if k == S_CONST:
                for i in range(d):
                    for j in range(l):
                        out[r, i, j] += mats[t, i, j]
            elif k == S_NORM_CLAMP:
                nx = 0.0
                for i in range(d):
                    nx += X[r, i] * X[r, i]
                c = min(math.sqrt(nx), caps[t])
                for i in range(d):
                    for j in range(l):
                        out[r, i, j] += mats[t, i, j] * c
            elif k == S_DIAG_CLAMP:
                for i in range(min(d, l)):
                    out[r, i, i] += vecs[t, i] * min(max(X[r, i], -caps[t]), caps[t])


@njit(_nrt=False)
def jump_rows_into(jp, X, u, out):
    kinds, mats, vecs, los, his = jp
    n, d = X.shape
    for r in range(n):
        for i in range(d):
            out[r, i] = 0.0
    for t in range(kinds.shape[0]):
        k = kinds[t]
        for r in range(n):
            if k == F_CONST:
                for i in range(d):
                    out[r, i] += vecs[t, i]
            elif k == F_MARK_CONST:
                for i in range(d):
                    out[r, i] += u * vecs[t, i]
            elif k == F_LINEAR or k == F_MARK_LINEAR:
                c = u if k == F_MARK_LINEAR else 1.0
                for i in range(d):
                    s = 0.0
                    for j in range(d):
                        s += mats[t, i, j] * X[r, j]
                    out[r, i] += c * s
            elif k == F_MARK_CLAMP or k == F_CLAMP:
                c = u if k == F_MARK_CLAMP else 1.0
                for i in range(d):
                    out[r, i] += c * vecs[t, i] * min(max(X[r, i], los[t, i]), his[t, i])


BLOCK_ROWS = 256


@njit
def euler_paths(x0, dts, h, jcoef, dW, counts, eps, noisy, eta, stride,
                dp, sp, jp, marks, opp):
    """Splitting scheme over ``n`` replicas.

    Per cell: ``y = x + [b + sigma h + sum_q jcoef_q f_q] dt`` plus, when
    ``noisy``, ``sqrt(eps) sigma dW + eps sum_q counts_q f_q``. Then either
    ``x <- J_dt(y)`` (``eta == 0``) or ``x <- y - dt A^eta(x)`` (explicit
    Yosida step). A replica that fails is frozen and its later records are nan.
    Replicas are advanced in blocks of ``BLOCK_ROWS`` so the noise stays in cache.
    """
    n, d = x0.shape
    m = dts.shape[0]
    nrec = m // stride + 1
    paths = np.empty((n, nrec, d))
    kvar = np.zeros(n)
    status = np.zeros(n, dtype=np.int64)
    fail_step = np.full(n, -1, dtype=np.int64)
    for r0 in range(0, n, BLOCK_ROWS):
        r1 = min(n, r0 + BLOCK_ROWS)
        hb = h[r0:r1] if h.shape[0] > 1 else h
        jb = jcoef[r0:r1] if jcoef.shape[0] > 1 else jcoef
        wb = dW[r0:r1] if noisy else dW
        cb = counts[r0:r1] if noisy else counts
        _euler_block(x0[r0:r1], dts, hb, jb, wb, cb, eps, noisy, eta, stride, dp, sp, jp,
                     marks, opp, paths[r0:r1], kvar[r0:r1], status[r0:r1], fail_step[r0:r1])
    return paths, kvar, status, fail_step


@njit
def _euler_block(x0, dts, h, jcoef, dW, counts, eps, noisy, eta, stride,
                 dp, sp, jp, marks, opp, paths, kvar, status, fail_step):
    n, d = x0.shape
    m = dts.shape[0]
    l = h.shape[2]
    nm = marks.shape[0]
    nrec = paths.shape[1]
    sq = math.sqrt(eps)
    X = x0.copy()
    B = np.empty((n, d))
    S = np.empty((n, d, l))
    F = np.empty((n, d))
    Y = np.empty((n, d))
    Z = np.empty((n, d))
    cq = np.empty(n)
    st = np.zeros(n, dtype=np.int64)
    resid = np.zeros(n)
    work = np.empty((3, d))
    alive = np.ones(n, dtype=np.bool_)
    for r in range(n):
        for i in range(d):
            paths[r, 0, i] = X[r, i]
    rec = 1
    for k in range(m):
        dt = dts[k]
        drift_rows_into(dp, X, B)
        sigma_rows_into(sp, X, S)
        for r in range(n):
            hr = r if h.shape[0] > 1 else 0
            for i in range(d):
                acc = B[r, i]
                for j in range(l):
                    acc += S[r, i, j] * h[hr, k, j]
                Y[r, i] = X[r, i] + acc * dt
        for q in range(nm):
            any_c = False
            for r in range(n):
                jr = r if jcoef.shape[0] > 1 else 0
                c = jcoef[jr, k, q] * dt
                if noisy:
                    c += eps * counts[r, k, q]
                cq[r] = c
                if c != 0.0:
                    any_c = True
            if any_c:
                jump_rows_into(jp, X, marks[q], F)
                for r in range(n):
                    if cq[r] != 0.0:
                        for i in range(d):
                            Y[r, i] += cq[r] * F[r, i]
        if noisy:
            for r in range(n):
                for i in range(d):
                    s = 0.0
                    for j in range(l):
                        s += S[r, i, j] * dW[r, k, j]
                    Y[r, i] += sq * s
        if eta > 0.0:
            resolvent_rows_into(opp, eta, X, Z, st, resid, work)
        else:
            resolvent_rows_into(opp, dt, Y, Z, st, resid, work)
        for r in range(n):
            if not alive[r]:
                continue
            dk2 = 0.0
            ok = st[r] == ST_OK
            for i in range(d):
                if eta > 0.0:
                    dki = dt * (X[r, i] - Z[r, i]) / eta
                    xn = Y[r, i] - dki
                else:
                    dki = Y[r, i] - Z[r, i]
                    xn = Z[r, i]
                dk2 += dki * dki
                Z[r, i] = xn
                if not math.isfinite(xn):
                    ok = False
            kvar[r] += math.sqrt(dk2)
            if not ok:
                status[r] = st[r] if st[r] != ST_OK else ST_NONFINITE
                fail_step[r] = k
                alive[r] = False
                continue
            for i in range(d):
                X[r, i] = Z[r, i]
        if (k + 1) % stride == 0:
            for r in range(n):
                for i in range(d):
                    paths[r, rec, i] = X[r, i] if alive[r] else np.nan
            rec += 1
    for r in range(n):
        if not alive[r]:
            for kk in range(fail_step[r] // stride + 1, nrec):
                for i in range(d):
                    paths[r, kk, i] = np.nan
