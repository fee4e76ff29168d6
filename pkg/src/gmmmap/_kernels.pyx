# cython: language_level=3
"""Compiled inner loops.  Every routine here has a twin in
``_kernels_py.py`` performing the same floating-point operations in the
same order; the two must agree bit for bit."""

from libc.math cimport exp, fabs, pow, sqrt

import numpy as np

cdef double EPS = 1e-6


cdef inline double _det3(double xx, double xy, double xz,
                         double yy, double yz, double zz) nogil:
    return (xx * (yy * zz - yz * yz)
            - xy * (xy * zz - yz * xz)
            + xz * (xy * yz - yy * xz))


def segment_row(const double[:] depths, double tau_depth, double tau_rel, bint delayed):
    """Single left-to-right pass; returns (starts, ends, slopes)."""
    cdef Py_ssize_t w = depths.shape[0]
    cdef Py_ssize_t u, start = 0, col_last = 0
    cdef long n = 0
    cdef double d, pred, gate, slope_used, depth_last = 0.0
    cdef double sx = 0.0, sd = 0.0, sxx = 0.0, sxd = 0.0, x, den, cur = 0.0, s2 = 0.0
    cdef double ring[5]
    cdef bint is_open = False
    starts = []
    ends = []
    slopes = []
    for u in range(w):
        d = depths[u]
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
            pred = depth_last + slope_used * <double>(u - col_last)
            gate = tau_rel * d
            if gate < tau_depth:
                gate = tau_depth
            if fabs(d - pred) <= gate:
                x = <double>(u - start)
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
        start = u
        col_last = u
        depth_last = d
        n = 1
        sx = 0.0
        sd = d
        sxx = 0.0
        sxd = 0.0
        cur = 0.0
        ring[1] = 0.0
    if is_open:
        starts.append(start)
        ends.append(col_last)
        slopes.append(cur)
    return (np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64),
            np.asarray(slopes, dtype=np.float64))


cdef inline void _box(const double* m, const double* c, double k, double* out) nogil:
    cdef double hx = k * sqrt(c[0] + EPS)
    cdef double hy = k * sqrt(c[3] + EPS)
    cdef double hz = k * sqrt(c[5] + EPS)
    out[0] = m[0] - hx
    out[1] = m[1] - hy
    out[2] = m[2] - hz
    out[3] = m[0] + hx
    out[4] = m[1] + hy
    out[5] = m[2] + hz


cdef double _hellinger_sq(const double* ma, const double* ca,
                          const double* mb, const double* cb) nogil:
    cdef double axx = ca[0] + EPS, axy = ca[1], axz = ca[2]
    cdef double ayy = ca[3] + EPS, ayz = ca[4], azz = ca[5] + EPS
    cdef double bxx = cb[0] + EPS, bxy = cb[1], bxz = cb[2]
    cdef double byy = cb[3] + EPS, byz = cb[4], bzz = cb[5] + EPS
    cdef double mxx = 0.5 * (axx + bxx), mxy = 0.5 * (axy + bxy), mxz = 0.5 * (axz + bxz)
    cdef double myy = 0.5 * (ayy + byy), myz = 0.5 * (ayz + byz), mzz = 0.5 * (azz + bzz)
    cdef double det_a = _det3(axx, axy, axz, ayy, ayz, azz)
    cdef double det_b = _det3(bxx, bxy, bxz, byy, byz, bzz)
    cdef double det_m = _det3(mxx, mxy, mxz, myy, myz, mzz)
    if det_a <= 0.0 or det_b <= 0.0 or det_m <= 0.0:
        return 1.0
    cdef double pxx = (myy * mzz - myz * myz) / det_m
    cdef double pxy = (mxz * myz - mxy * mzz) / det_m
    cdef double pxz = (mxy * myz - mxz * myy) / det_m
    cdef double pyy = (mxx * mzz - mxz * mxz) / det_m
    cdef double pyz = (mxy * mxz - mxx * myz) / det_m
    cdef double pzz = (mxx * myy - mxy * mxy) / det_m
    cdef double dx = ma[0] - mb[0], dy = ma[1] - mb[1], dz = ma[2] - mb[2]
    cdef double q = (dx * (pxx * dx + pxy * dy + pxz * dz)
                     + dy * (pxy * dx + pyy * dy + pyz * dz)
                     + dz * (pxz * dx + pyz * dy + pzz * dz))
    cdef double coef = pow(det_a, 0.25) * pow(det_b, 0.25) / sqrt(det_m)
    cdef double h2 = 1.0 - coef * exp(-0.125 * q)
    if h2 < 0.0:
        return 0.0
    if h2 > 1.0:
        return 1.0
    return h2


def hellinger_sq(const double[:] ma, const double[:] ca, const double[:] mb, const double[:] cb):
    return _hellinger_sq(&ma[0], &ca[0], &mb[0], &cb[0])


cdef inline void _merge_into(double* mo, double* co, double* wo,
                             const double* mb, const double* cb, double wb) nogil:
    cdef double wa = wo[0]
    cdef double w = wa + wb
    cdef double ma0 = mo[0], ma1 = mo[1], ma2 = mo[2]
    cdef double mu0 = (wa * ma0 + wb * mb[0]) / w
    cdef double mu1 = (wa * ma1 + wb * mb[1]) / w
    cdef double mu2 = (wa * ma2 + wb * mb[2]) / w
    co[0] = (wa * (co[0] + ma0 * ma0) + wb * (cb[0] + mb[0] * mb[0])) / w - mu0 * mu0
    co[1] = (wa * (co[1] + ma0 * ma1) + wb * (cb[1] + mb[0] * mb[1])) / w - mu0 * mu1
    co[2] = (wa * (co[2] + ma0 * ma2) + wb * (cb[2] + mb[0] * mb[2])) / w - mu0 * mu2
    co[3] = (wa * (co[3] + ma1 * ma1) + wb * (cb[3] + mb[1] * mb[1])) / w - mu1 * mu1
    co[4] = (wa * (co[4] + ma1 * ma2) + wb * (cb[4] + mb[1] * mb[2])) / w - mu1 * mu2
    co[5] = (wa * (co[5] + ma2 * ma2) + wb * (cb[5] + mb[2] * mb[2])) / w - mu2 * mu2
    mo[0] = mu0
    mo[1] = mu1
    mo[2] = mu2
    wo[0] = w


def refine_greedy(const double[:, :] means, const double[:, :] covs, const double[:] weights,
                  double k, double tau_h):
    """First-match agglomeration in input order.

    Returns (out_means, out_covs, out_weights, assignment).
    """
    cdef Py_ssize_t n = means.shape[0]
    out_m_arr = np.empty((n, 3), dtype=np.float64)
    out_c_arr = np.empty((n, 6), dtype=np.float64)
    out_w_arr = np.empty(n, dtype=np.float64)
    boxes_arr = np.empty((n, 6), dtype=np.float64)
    assign_arr = np.empty(n, dtype=np.int64)
    cdef double[:, ::1] om = out_m_arr
    cdef double[:, ::1] oc = out_c_arr
    cdef double[::1] ow = out_w_arr
    cdef double[:, ::1] ob = boxes_arr
    cdef long long[::1] assign = assign_arr
    cdef double mb[3]
    cdef double cb[6]
    cdef double bb[6]
    cdef Py_ssize_t i, j, t, m = 0
    cdef bint hit
    with nogil:
        for i in range(n):
            for t in range(3):
                mb[t] = means[i, t]
            for t in range(6):
                cb[t] = covs[i, t]
            _box(mb, cb, k, bb)
            hit = False
            for j in range(m):
                if (bb[0] <= ob[j, 3] and ob[j, 0] <= bb[3]
                        and bb[1] <= ob[j, 4] and ob[j, 1] <= bb[4]
                        and bb[2] <= ob[j, 5] and ob[j, 2] <= bb[5]):
                    if _hellinger_sq(&om[j, 0], &oc[j, 0], mb, cb) <= tau_h:
                        _merge_into(&om[j, 0], &oc[j, 0], &ow[j], mb, cb, weights[i])
                        _box(&om[j, 0], &oc[j, 0], k, &ob[j, 0])
                        assign[i] = j
                        hit = True
                        break
            if not hit:
                for t in range(3):
                    om[m, t] = mb[t]
                for t in range(6):
                    oc[m, t] = cb[t]
                ow[m] = weights[i]
                _box(mb, cb, k, &ob[m, 0])
                assign[i] = m
                m += 1
    return out_m_arr[:m].copy(), out_c_arr[:m].copy(), out_w_arr[:m].copy(), assign_arr


def pdf_sums(double x0, double x1, double x2, const long long[:] ids,
             const double[:, :] means, const double[:, :] precs, const double[:] norms,
             const double[:] weights, const unsigned char[:] kinds):
    """Weighted density sums (occupied, free) over ``ids`` in the given order."""
    cdef double s_occ = 0.0, s_free = 0.0, dx, dy, dz, q, t
    cdef Py_ssize_t a, i
    with nogil:
        for a in range(ids.shape[0]):
            i = ids[a]
            dx = x0 - means[i, 0]
            dy = x1 - means[i, 1]
            dz = x2 - means[i, 2]
            q = (dx * (precs[i, 0] * dx + precs[i, 1] * dy + precs[i, 2] * dz)
                 + dy * (precs[i, 1] * dx + precs[i, 3] * dy + precs[i, 4] * dz)
                 + dz * (precs[i, 2] * dx + precs[i, 4] * dy + precs[i, 5] * dz))
            t = weights[i] * norms[i] * exp(-0.5 * q)
            if kinds[i] == 0:
                s_occ += t
            else:
                s_free += t
    return s_occ, s_free


def best_match(const long long[:] ids, const double[:, :] means, const double[:, :] covs,
               const unsigned char[:] kinds, int kind, const double[:] mb, const double[:] cb):
    """Minimum H² to ``(mb, cb)`` over same-kind ``ids``; first minimum wins.

    Returns (best_id or -1, best_h2, evaluations).
    """
    cdef Py_ssize_t a, i
    cdef long long best = -1
    cdef long evals = 0
    cdef double h, best_h = 2.0
    cdef double m[3]
    cdef double c[6]
    for a in range(3):
        m[a] = mb[a]
    for a in range(6):
        c[a] = cb[a]
    with nogil:
        for a in range(ids.shape[0]):
            i = ids[a]
            if kinds[i] != kind:
                continue
            h = _hellinger_sq(&means[i, 0], &covs[i, 0], m, c)
            evals += 1
            if h < best_h:
                best_h = h
                best = i
    return best, best_h, evals
