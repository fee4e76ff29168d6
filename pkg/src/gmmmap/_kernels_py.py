"""Pure-Python twins of the routines in ``_kernels.pyx``.

Keep the arithmetic in lock-step with the compiled version; the test
suite checks both backends for bit-identical output.
"""

from __future__ import annotations

import math

import numpy as np

from .core import EPS, det3, mahalanobis_sq


def segment_row(depths, tau_depth: float, tau_rel: float, delayed: bool):
    starts: list[int] = []
    ends: list[int] = []
    slopes: list[float] = []
    is_open = False
    start = col_last = n = 0
    depth_last = sx = sd = sxx = sxd = cur = s2 = 0.0
    ring = [0.0] * 5
    for u, d in enumerate(np.asarray(depths, dtype=float).tolist()):
        if not d > 0.0:
            if is_open:
                starts.append(start)
                ends.append(col_last)
                slopes.append(cur)
                is_open = False
            continue
        if is_open:
            if not delayed:
                slope_used = cur
            elif n == 1:
                slope_used = 0.0
            elif n - 4 <= 2:
                slope_used = s2
            else:
                slope_used = ring[(n - 4) % 5]
            pred = depth_last + slope_used * float(u - col_last)
            gate = tau_rel * d
            if gate < tau_depth:
                gate = tau_depth
            if abs(d - pred) <= gate:
                x = float(u - start)
                n += 1
                sx += x
                sd += d
                sxx += x * x
                sxd += x * d
                den = n * sxx - sx * sx
                cur = (n * sxd - sx * sd) / den
                if n == 2:
                    s2 = cur
                ring[n % 5] = cur
                col_last = u
                depth_last = d
                continue
            starts.append(start)
            ends.append(col_last)
            slopes.append(cur)
        is_open = True
        start = col_last = u
        depth_last = d
        n = 1
        sx = sxx = sxd = cur = 0.0
        sd = d
        ring[1] = 0.0
    if is_open:
        starts.append(start)
        ends.append(col_last)
        slopes.append(cur)
    return (np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64),
            np.asarray(slopes, dtype=np.float64))


def _box(m, c, k):
    hx = k * math.sqrt(c[0] + EPS)
    hy = k * math.sqrt(c[3] + EPS)
    hz = k * math.sqrt(c[5] + EPS)
    return [m[0] - hx, m[1] - hy, m[2] - hz, m[0] + hx, m[1] + hy, m[2] + hz]


def hellinger_sq(ma, ca, mb, cb) -> float:
    axx, axy, axz, ayy, ayz, azz = ca[0] + EPS, ca[1], ca[2], ca[3] + EPS, ca[4], ca[5] + EPS
    bxx, bxy, bxz, byy, byz, bzz = cb[0] + EPS, cb[1], cb[2], cb[3] + EPS, cb[4], cb[5] + EPS
    rm = (0.5 * (axx + bxx), 0.5 * (axy + bxy), 0.5 * (axz + bxz),
          0.5 * (ayy + byy), 0.5 * (ayz + byz), 0.5 * (azz + bzz))
    det_a = det3((axx, axy, axz, ayy, ayz, azz))
    det_b = det3((bxx, bxy, bxz, byy, byz, bzz))
    det_m = det3(rm)
    if det_a <= 0.0 or det_b <= 0.0 or det_m <= 0.0:
        return 1.0
    mxx, mxy, mxz, myy, myz, mzz = rm
    p = ((myy * mzz - myz * myz) / det_m,
         (mxz * myz - mxy * mzz) / det_m,
         (mxy * myz - mxz * myy) / det_m,
         (mxx * mzz - mxz * mxz) / det_m,
         (mxy * mxz - mxx * myz) / det_m,
         (mxx * myy - mxy * mxy) / det_m)
    q = mahalanobis_sq(p, ma[0] - mb[0], ma[1] - mb[1], ma[2] - mb[2])
    coef = math.pow(det_a, 0.25) * math.pow(det_b, 0.25) / math.sqrt(det_m)
    h2 = 1.0 - coef * math.exp(-0.125 * q)
    if h2 < 0.0:
        return 0.0
    if h2 > 1.0:
        return 1.0
    return h2


def _merge_into(om, oc, ow, j, mb, cb, wb):
    wa = ow[j]
    w = wa + wb
    ma0, ma1, ma2 = om[j]
    mu0 = (wa * ma0 + wb * mb[0]) / w
    mu1 = (wa * ma1 + wb * mb[1]) / w
    mu2 = (wa * ma2 + wb * mb[2]) / w
    c = oc[j]
    oc[j] = [
        (wa * (c[0] + ma0 * ma0) + wb * (cb[0] + mb[0] * mb[0])) / w - mu0 * mu0,
        (wa * (c[1] + ma0 * ma1) + wb * (cb[1] + mb[0] * mb[1])) / w - mu0 * mu1,
        (wa * (c[2] + ma0 * ma2) + wb * (cb[2] + mb[0] * mb[2])) / w - mu0 * mu2,
        (wa * (c[3] + ma1 * ma1) + wb * (cb[3] + mb[1] * mb[1])) / w - mu1 * mu1,
        (wa * (c[4] + ma1 * ma2) + wb * (cb[4] + mb[1] * mb[2])) / w - mu1 * mu2,
        (wa * (c[5] + ma2 * ma2) + wb * (cb[5] + mb[2] * mb[2])) / w - mu2 * mu2,
    ]
    om[j] = [mu0, mu1, mu2]
    ow[j] = w


def refine_greedy(means, covs, weights, k: float, tau_h: float):
    means = np.asarray(means, dtype=float).reshape(-1, 3)
    covs = np.asarray(covs, dtype=float).reshape(-1, 6)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    n = len(means)
    om: list[list[float]] = []
    oc: list[list[float]] = []
    ow: list[float] = []
    boxes = np.empty((max(n, 1), 6))
    assign = np.empty(n, dtype=np.int64)
    for i in range(n):
        mb = means[i].tolist()
        cb = covs[i].tolist()
        bb = _box(mb, cb, k)
        m = len(om)
        # vectorised closed-box overlap; candidates stay in ascending order
        ob = boxes[:m]
        mask = ((bb[0] <= ob[:, 3]) & (ob[:, 0] <= bb[3])
                & (bb[1] <= ob[:, 4]) & (ob[:, 1] <= bb[4])
                & (bb[2] <= ob[:, 5]) & (ob[:, 2] <= bb[5]))
        for j in np.flatnonzero(mask).tolist():
            if hellinger_sq(om[j], oc[j], mb, cb) <= tau_h:
                _merge_into(om, oc, ow, j, mb, cb, float(weights[i]))
                boxes[j] = _box(om[j], oc[j], k)
                assign[i] = j
                break
        else:
            om.append(mb)
            oc.append(cb)
            ow.append(float(weights[i]))
            boxes[m] = bb
            assign[i] = m
    return (np.asarray(om, dtype=float).reshape(-1, 3), np.asarray(oc, dtype=float).reshape(-1, 6),
            np.asarray(ow, dtype=float), assign)


def pdf_sums(x0, x1, x2, ids, means, precs, norms, weights, kinds):
    s_occ = 0.0
    s_free = 0.0
    for i in np.asarray(ids).tolist():
        m = means[i]
        p = precs[i]
        q = mahalanobis_sq((float(p[0]), float(p[1]), float(p[2]),
                            float(p[3]), float(p[4]), float(p[5])),
                           x0 - float(m[0]), x1 - float(m[1]), x2 - float(m[2]))
        t = float(weights[i]) * float(norms[i]) * math.exp(-0.5 * q)
        if kinds[i] == 0:
            s_occ += t
        else:
            s_free += t
    return s_occ, s_free


def best_match(ids, means, covs, kinds, kind: int, mb, cb):
    mb = [float(v) for v in mb]
    cb = [float(v) for v in cb]
    best = -1
    best_h = 2.0
    evals = 0
    for i in np.asarray(ids).tolist():
        if kinds[i] != kind:
            continue
        h = hellinger_sq(means[i].tolist(), covs[i].tolist(), mb, cb)
        evals += 1
        if h < best_h:
            best_h = h
            best = i
    return best, best_h, evals
