# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled query kernels.

Semantics mirror `wbmpc._core_py` exactly; see that module for the contract
notes. The parity test suite compares the two backends on random inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, fabs, hypot, INFINITY

cnp.import_array()

IS_COMPILED = True

SHAPE_SPHERE = 0
SHAPE_BOX = 1
SHAPE_CYLINDER = 2
SHAPE_CAPSULE = 3

PAIR_OK = 0
PAIR_NEEDS_EPA = 1
PAIR_DEGENERATE = 2
PAIR_NO_CONVERGENCE = 3

JOINT_FIXED = 0
JOINT_REVOLUTE = 1
JOINT_PRISMATIC = 2
JOINT_FLOATING = 3

GJK_MAX_ITERS = 128
GJK_REL_TOL = 1e-10

cdef int _SPHERE = 0, _BOX = 1, _CYLINDER = 2, _CAPSULE = 3
cdef int _OK = 0, _EPA = 1, _DEGEN = 2, _NOCONV = 3
cdef int _FIXED = 0, _REVOLUTE = 1, _PRISMATIC = 2, _FLOATING = 3
cdef double _REL_TOL = 1e-10
cdef double _ABS_EPS = 1e-12
cdef int _MAX_ITERS = 128


# ---------------------------------------------------------------------------
# small vector / quaternion helpers

cdef inline double _dot3(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline void _cross3(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double _norm3(const double* a) noexcept nogil:
    return sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


cdef inline void _qmul(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]


cdef inline void _qrot(const double* q, const double* v, double* out) noexcept nogil:
    # v + 2 u x (u x v + w v)
    cdef double t[3]
    cdef double c[3]
    t[0] = q[2] * v[2] - q[3] * v[1] + q[0] * v[0]
    t[1] = q[3] * v[0] - q[1] * v[2] + q[0] * v[1]
    t[2] = q[1] * v[1] - q[2] * v[0] + q[0] * v[2]
    c[0] = q[2] * t[2] - q[3] * t[1]
    c[1] = q[3] * t[0] - q[1] * t[2]
    c[2] = q[1] * t[1] - q[2] * t[0]
    out[0] = v[0] + 2.0 * c[0]
    out[1] = v[1] + 2.0 * c[1]
    out[2] = v[2] + 2.0 * c[2]


cdef inline void _qrot_inv(const double* q, const double* v, double* out) noexcept nogil:
    cdef double qc[4]
    qc[0] = q[0]
    qc[1] = -q[1]
    qc[2] = -q[2]
    qc[3] = -q[3]
    _qrot(qc, v, out)


cdef inline void _qmat(const double* q, double* R) noexcept nogil:
    # row-major 3x3
    cdef double w = q[0], x = q[1], y = q[2], z = q[3]
    R[0] = 1 - 2 * (y * y + z * z); R[1] = 2 * (x * y - w * z); R[2] = 2 * (x * z + w * y)
    R[3] = 2 * (x * y + w * z); R[4] = 1 - 2 * (x * x + z * z); R[5] = 2 * (y * z - w * x)
    R[6] = 2 * (x * z - w * y); R[7] = 2 * (y * z + w * x); R[8] = 1 - 2 * (x * x + y * y)


cdef inline void _Rv(const double* R, const double* v, double* out) noexcept nogil:
    out[0] = R[0] * v[0] + R[1] * v[1] + R[2] * v[2]
    out[1] = R[3] * v[0] + R[4] * v[1] + R[5] * v[2]
    out[2] = R[6] * v[0] + R[7] * v[1] + R[8] * v[2]


cdef inline void _Rtv(const double* R, const double* v, double* out) noexcept nogil:
    out[0] = R[0] * v[0] + R[3] * v[1] + R[6] * v[2]
    out[1] = R[1] * v[0] + R[4] * v[1] + R[7] * v[2]
    out[2] = R[2] * v[0] + R[5] * v[1] + R[8] * v[2]


# ---------------------------------------------------------------------------
# support functions

cdef void _support_full_local(int stype, const double* p, const double* d, double* out) noexcept nogil:
    cdef double n, rho, z
    if stype == _SPHERE:
        n = _norm3(d)
        out[0] = p[0] * d[0] / n
        out[1] = p[0] * d[1] / n
        out[2] = p[0] * d[2] / n
        return
    if stype == _BOX:
        out[0] = p[0] if d[0] >= 0.0 else -p[0]
        out[1] = p[1] if d[1] >= 0.0 else -p[1]
        out[2] = p[2] if d[2] >= 0.0 else -p[2]
        return
    if stype == _CYLINDER:
        rho = hypot(d[0], d[1])
        z = p[1] if d[2] >= 0.0 else -p[1]
        if rho < _ABS_EPS:
            out[0] = 0.0
            out[1] = 0.0
            out[2] = z
        else:
            out[0] = p[0] * d[0] / rho
            out[1] = p[0] * d[1] / rho
            out[2] = z
        return
    # capsule
    n = _norm3(d)
    out[0] = p[0] * d[0] / n
    out[1] = p[0] * d[1] / n
    out[2] = (p[1] if d[2] >= 0.0 else -p[1]) + p[0] * d[2] / n


cdef void _support_core_local(int stype, const double* p, const double* d, double* out) noexcept nogil:
    cdef double rho, z
    if stype == _SPHERE:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = 0.0
        return
    if stype == _CAPSULE:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = p[1] if d[2] >= 0.0 else -p[1]
        return
    if stype == _BOX:
        out[0] = p[0] if d[0] >= 0.0 else -p[0]
        out[1] = p[1] if d[1] >= 0.0 else -p[1]
        out[2] = p[2] if d[2] >= 0.0 else -p[2]
        return
    rho = hypot(d[0], d[1])
    z = p[1] if d[2] >= 0.0 else -p[1]
    if rho < _ABS_EPS:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = z
    else:
        out[0] = p[0] * d[0] / rho
        out[1] = p[0] * d[1] / rho
        out[2] = z


cdef inline void _support_core_world(int stype, const double* p, const double* R,
                                     const double* t, const double* d_world,
                                     double* out) noexcept nogil:
    cdef double dl[3]
    cdef double sl[3]
    _Rtv(R, d_world, dl)
    _support_core_local(stype, p, dl, sl)
    _Rv(R, sl, out)
    out[0] += t[0]
    out[1] += t[1]
    out[2] += t[2]


# ---------------------------------------------------------------------------
# GJK subalgorithm: subset enumeration (must mirror _core_py exactly)

cdef int _SUB_N = 15
cdef int _SUB_SIZE[15]
cdef int _SUB_IDX[15][4]

_SUB_TABLE = [
    [0], [1], [2], [3],
    [0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3],
    [0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3],
    [0, 1, 2, 3],
]
for _si, _sub in enumerate(_SUB_TABLE):
    _SUB_SIZE[_si] = len(_sub)
    for _sj, _sv in enumerate(_sub):
        _SUB_IDX[_si][_sj] = _sv


cdef int _affine_project_c(double W[4][3], const int* idx, int k, double* lam) noexcept nogil:
    """Barycentrics of the origin's projection on aff(W[idx]); 1 ok, 0 skip."""
    cdef double D0[3]
    cdef double D1[3]
    cdef double D2[3]
    cdef double g00, g01, g02, g11, g12, g22, b0, b1, b2, det
    cdef double m0, m1, m2
    cdef int i
    if k == 1:
        lam[0] = 1.0
        return 1
    for i in range(3):
        D0[i] = W[idx[1]][i] - W[idx[0]][i]
    if k == 2:
        g00 = _dot3(D0, D0)
        if g00 < 1e-18:
            return 0
        m0 = -_dot3(D0, W[idx[0]]) / g00
        lam[0] = 1.0 - m0
        lam[1] = m0
        return 1
    for i in range(3):
        D1[i] = W[idx[2]][i] - W[idx[0]][i]
    if k == 3:
        g00 = _dot3(D0, D0)
        g01 = _dot3(D0, D1)
        g11 = _dot3(D1, D1)
        b0 = -_dot3(D0, W[idx[0]])
        b1 = -_dot3(D1, W[idx[0]])
        det = g00 * g11 - g01 * g01
        if fabs(det) < 1e-18:
            return 0
        m0 = (b0 * g11 - b1 * g01) / det
        m1 = (g00 * b1 - g01 * b0) / det
        lam[0] = 1.0 - m0 - m1
        lam[1] = m0
        lam[2] = m1
        return 1
    for i in range(3):
        D2[i] = W[idx[3]][i] - W[idx[0]][i]
    g00 = _dot3(D0, D0); g01 = _dot3(D0, D1); g02 = _dot3(D0, D2)
    g11 = _dot3(D1, D1); g12 = _dot3(D1, D2); g22 = _dot3(D2, D2)
    b0 = -_dot3(D0, W[idx[0]])
    b1 = -_dot3(D1, W[idx[0]])
    b2 = -_dot3(D2, W[idx[0]])
    det = (g00 * (g11 * g22 - g12 * g12)
           - g01 * (g01 * g22 - g12 * g02)
           + g02 * (g01 * g12 - g11 * g02))
    if fabs(det) < 1e-24:
        return 0
    m0 = (b0 * (g11 * g22 - g12 * g12)
          - g01 * (b1 * g22 - g12 * b2)
          + g02 * (b1 * g12 - g11 * b2)) / det
    m1 = (g00 * (b1 * g22 - b2 * g12)
          - b0 * (g01 * g22 - g12 * g02)
          + g02 * (g01 * b2 - b1 * g02)) / det
    m2 = (g00 * (g11 * b2 - b1 * g12)
          - g01 * (g01 * b2 - b1 * g02)
          + b0 * (g01 * g12 - g11 * g02)) / det
    lam[0] = 1.0 - m0 - m1 - m2
    lam[1] = m0
    lam[2] = m1
    lam[3] = m2
    return 1


cdef int _closest_on_simplex_c(double W[4][3], int n, double* v_out,
                               int* keep, double* lam_out) noexcept nogil:
    """Closest point of conv(W[:n]) to the origin; returns kept count."""
    cdef double best_d2 = 0.0
    cdef int found = 0
    cdef int best_k = 0
    cdef int best_sub = -1
    cdef double lam[4]
    cdef double best_lam[4]
    cdef double v[3]
    cdef double d2, s, thresh
    cdef int si, k, i, j, ok, neg
    for si in range(_SUB_N):
        k = _SUB_SIZE[si]
        if _SUB_IDX[si][k - 1] >= n:
            continue
        ok = _affine_project_c(W, _SUB_IDX[si], k, lam)
        if not ok:
            continue
        neg = 0
        for i in range(k):
            if lam[i] < -1e-12:
                neg = 1
                break
        if neg:
            continue
        s = 0.0
        for i in range(k):
            if lam[i] < 0.0:
                lam[i] = 0.0
            s += lam[i]
        for i in range(k):
            lam[i] /= s
        v[0] = 0.0; v[1] = 0.0; v[2] = 0.0
        for i in range(k):
            j = _SUB_IDX[si][i]
            v[0] += lam[i] * W[j][0]
            v[1] += lam[i] * W[j][1]
            v[2] += lam[i] * W[j][2]
        d2 = _dot3(v, v)
        thresh = best_d2 if best_d2 > 1.0 else 1.0
        if (not found) or d2 < best_d2 - 1e-14 * thresh:
            found = 1
            best_d2 = d2
            best_sub = si
            best_k = k
            for i in range(k):
                best_lam[i] = lam[i]
            v_out[0] = v[0]; v_out[1] = v[1]; v_out[2] = v[2]
    for i in range(best_k):
        keep[i] = _SUB_IDX[best_sub][i]
        lam_out[i] = best_lam[i]
    return best_k


cdef int _gjk_c(int coreA, const double* pA, const double* RA, const double* tA,
                int coreB, const double* pB, const double* RB, const double* tB,
                double* dist, double* wit_a, double* wit_b,
                double W[4][3], double WA[4][3], double WB[4][3],
                int* nsimp, double* lower) noexcept nogil:
    """GJK on cores; returns 0 converged, 1 intersecting, 3 no convergence."""
    cdef double v[3]
    cdef double sa[3]
    cdef double sb[3]
    cdef double w[3]
    cdef double d[3]
    cdef double lam[4]
    cdef double tmpW[4][3]
    cdef double tmpA[4][3]
    cdef double tmpB[4][3]
    cdef int keep[4]
    cdef int n = 0, it, i, j, m, dup
    cdef double d2, vw, vd
    cdef double prev_d2 = INFINITY
    v[0] = tA[0] - tB[0]
    v[1] = tA[1] - tB[1]
    v[2] = tA[2] - tB[2]
    if _dot3(v, v) < _ABS_EPS * _ABS_EPS:
        v[0] = 1.0; v[1] = 0.0; v[2] = 0.0
    lower[0] = 0.0
    for it in range(_MAX_ITERS):
        d2 = _dot3(v, v)
        if d2 < _ABS_EPS * _ABS_EPS:
            nsimp[0] = n
            return 1
        d[0] = -v[0]; d[1] = -v[1]; d[2] = -v[2]
        _support_core_world(coreA, pA, RA, tA, d, sa)
        d[0] = v[0]; d[1] = v[1]; d[2] = v[2]
        _support_core_world(coreB, pB, RB, tB, d, sb)
        w[0] = sa[0] - sb[0]
        w[1] = sa[1] - sb[1]
        w[2] = sa[2] - sb[2]
        vd = sqrt(d2)
        vw = _dot3(v, w)
        if vw / vd > lower[0]:
            lower[0] = vw / vd
        if n > 0 and d2 - vw <= _REL_TOL * d2:
            break
        dup = 0
        for j in range(n):
            if (fabs(W[j][0] - w[0]) < 1e-14 and fabs(W[j][1] - w[1]) < 1e-14
                    and fabs(W[j][2] - w[2]) < 1e-14):
                dup = 1
                break
        if dup:
            break
        for i in range(3):
            W[n][i] = w[i]
            WA[n][i] = sa[i]
            WB[n][i] = sb[i]
        n += 1
        m = _closest_on_simplex_c(W, n, v, keep, lam)
        for i in range(m):
            for j in range(3):
                tmpW[i][j] = W[keep[i]][j]
                tmpA[i][j] = WA[keep[i]][j]
                tmpB[i][j] = WB[keep[i]][j]
        for i in range(m):
            for j in range(3):
                W[i][j] = tmpW[i][j]
                WA[i][j] = tmpA[i][j]
                WB[i][j] = tmpB[i][j]
        n = m
        d2 = _dot3(v, v)
        if n == 4 or d2 < _ABS_EPS * _ABS_EPS:
            nsimp[0] = n
            return 1
        # |v| is non-increasing in exact arithmetic; a stall means the
        # iteration is float-limited and the current estimate is converged
        if d2 >= prev_d2 * (1.0 - 1e-13):
            break
        prev_d2 = d2
    else:
        dist[0] = _norm3(v)
        nsimp[0] = n
        return 3
    dist[0] = _norm3(v)
    wit_a[0] = 0.0; wit_a[1] = 0.0; wit_a[2] = 0.0
    wit_b[0] = 0.0; wit_b[1] = 0.0; wit_b[2] = 0.0
    for i in range(n):
        wit_a[0] += lam[i] * WA[i][0]
        wit_a[1] += lam[i] * WA[i][1]
        wit_a[2] += lam[i] * WA[i][2]
        wit_b[0] += lam[i] * WB[i][0]
        wit_b[1] += lam[i] * WB[i][1]
        wit_b[2] += lam[i] * WB[i][2]
    nsimp[0] = n
    return 0


# ---------------------------------------------------------------------------
# analytic pair kernels

cdef void _closest_seg_seg(const double* p1, const double* q1,
                           const double* p2, const double* q2,
                           double* c1, double* c2) noexcept nogil:
    cdef double d1[3]
    cdef double d2v[3]
    cdef double r[3]
    cdef double a, e, f, c, b, den, s, t
    cdef int i
    for i in range(3):
        d1[i] = q1[i] - p1[i]
        d2v[i] = q2[i] - p2[i]
        r[i] = p1[i] - p2[i]
    a = _dot3(d1, d1)
    e = _dot3(d2v, d2v)
    f = _dot3(d2v, r)
    if a < 1e-18 and e < 1e-18:
        for i in range(3):
            c1[i] = p1[i]
            c2[i] = p2[i]
        return
    if a < 1e-18:
        t = f / e
        t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
        for i in range(3):
            c1[i] = p1[i]
            c2[i] = p2[i] + t * d2v[i]
        return
    c = _dot3(d1, r)
    if e < 1e-18:
        s = -c / a
        s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
        for i in range(3):
            c1[i] = p1[i] + s * d1[i]
            c2[i] = p2[i]
        return
    b = _dot3(d1, d2v)
    den = a * e - b * b
    if den > 1e-18:
        s = (b * f - c * e) / den
        s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
    else:
        s = 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = -c / a
        s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
    elif t > 1.0:
        t = 1.0
        s = (b - c) / a
        s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
    for i in range(3):
        c1[i] = p1[i] + s * d1[i]
        c2[i] = p2[i] + t * d2v[i]


cdef int _sphere_like_c(const double* ca, double ra, const double* cb, double rb,
                        double* dist, double* pa, double* pb, double* axis) noexcept nogil:
    cdef double u[3]
    cdef double L
    cdef int i
    for i in range(3):
        u[i] = ca[i] - cb[i]
    L = _norm3(u)
    if L < 1e-12:
        return 0
    for i in range(3):
        axis[i] = u[i] / L
        pa[i] = ca[i] - ra * axis[i]
        pb[i] = cb[i] + rb * axis[i]
    dist[0] = L - ra - rb
    return 1


cdef void _segment_world_c(const double* p, const double* R, const double* t,
                           double* e0, double* e1) noexcept nogil:
    cdef double hl = p[1]
    cdef int i
    for i in range(3):
        e0[i] = t[i] - hl * R[3 * i + 2]
        e1[i] = t[i] + hl * R[3 * i + 2]


# ---------------------------------------------------------------------------
# pair distance core

cdef int _pair_core(int stA, const double* pA, const double* qA, const double* tA,
                    int stB, const double* pB, const double* qB, const double* tB,
                    double* dist, double* wit_a, double* wit_b, double* axis,
                    int* conservative,
                    double W[4][3], double WA[4][3], double WB[4][3],
                    int* nsimp, double* lower) noexcept nogil:
    cdef double RA[9]
    cdef double RB[9]
    cdef double e0[3]
    cdef double e1[3]
    cdef double f0[3]
    cdef double f1[3]
    cdef double ca[3]
    cdef double cb[3]
    cdef double u[3]
    cdef double pAc[4]
    cdef double pBc[4]
    cdef double mA = 0.0, mB = 0.0
    cdef double core_dist
    cdef int coreA, coreB, kind, i, nA, nB
    conservative[0] = 0
    nsimp[0] = 0
    lower[0] = 0.0
    _qmat(qA, RA)
    _qmat(qB, RB)

    if stA == _SPHERE and stB == _SPHERE:
        if not _sphere_like_c(tA, pA[0], tB, pB[0], dist, wit_a, wit_b, axis):
            return _DEGEN
        return _OK
    if stA == _SPHERE and stB == _CAPSULE:
        _segment_world_c(pB, RB, tB, e0, e1)
        _closest_seg_seg(tA, tA, e0, e1, ca, cb)
        if not _sphere_like_c(tA, pA[0], cb, pB[0], dist, wit_a, wit_b, axis):
            return _DEGEN
        return _OK
    if stA == _CAPSULE and stB == _SPHERE:
        _segment_world_c(pA, RA, tA, e0, e1)
        _closest_seg_seg(e0, e1, tB, tB, ca, cb)
        if not _sphere_like_c(ca, pA[0], tB, pB[0], dist, wit_a, wit_b, axis):
            return _DEGEN
        return _OK
    if stA == _CAPSULE and stB == _CAPSULE:
        _segment_world_c(pA, RA, tA, e0, e1)
        _segment_world_c(pB, RB, tB, f0, f1)
        _closest_seg_seg(e0, e1, f0, f1, ca, cb)
        if not _sphere_like_c(ca, pA[0], cb, pB[0], dist, wit_a, wit_b, axis):
            return _DEGEN
        return _OK

    # margin decomposition
    coreA = stA
    coreB = stB
    for i in range(4):
        pAc[i] = pA[i]
        pBc[i] = pB[i]
    if stA == _SPHERE:
        mA = pA[0]
        pAc[0] = 0.0
    elif stA == _CAPSULE:
        mA = pA[0]
        pAc[0] = 0.0
        pAc[1] = pA[1]
    if stB == _SPHERE:
        mB = pB[0]
        pBc[0] = 0.0
    elif stB == _CAPSULE:
        mB = pB[0]
        pBc[0] = 0.0
        pBc[1] = pB[1]

    kind = _gjk_c(coreA, pAc, RA, tA, coreB, pBc, RB, tB,
                  &core_dist, ca, cb, W, WA, WB, nsimp, lower)
    if kind == 3:
        dist[0] = core_dist - mA - mB
        lower[0] = lower[0] - mA - mB
        if lower[0] < 0.0:
            lower[0] = 0.0
        return _NOCONV
    if kind == 0 and core_dist > 1e-9:
        dist[0] = core_dist - mA - mB
        for i in range(3):
            u[i] = (ca[i] - cb[i]) / core_dist
            axis[i] = u[i]
            wit_a[i] = ca[i] - mA * u[i]
            wit_b[i] = cb[i] + mB * u[i]
        return _OK
    # cores intersect or touch
    if stA == _CYLINDER or stB == _CYLINDER:
        nA = _CAPSULE if stA == _CYLINDER else stA
        nB = _CAPSULE if stB == _CYLINDER else stB
        kind = _pair_core(nA, pA, qA, tA, nB, pB, qB, tB,
                          dist, wit_a, wit_b, axis, conservative,
                          W, WA, WB, nsimp, lower)
        conservative[0] = 1
        return kind
    return _EPA


# ---------------------------------------------------------------------------
# AABBs

cdef void _aabb_posed_c(int stype, const double* p, const double* q,
                        const double* t, double* lo, double* hi) noexcept nogil:
    cdef double R[9]
    cdef double e[3]
    cdef double a0, a1, a2, s
    cdef int i
    if stype == _SPHERE:
        for i in range(3):
            lo[i] = t[i] - p[0]
            hi[i] = t[i] + p[0]
        return
    _qmat(q, R)
    if stype == _BOX:
        for i in range(3):
            e[i] = fabs(R[3 * i]) * p[0] + fabs(R[3 * i + 1]) * p[1] + fabs(R[3 * i + 2]) * p[2]
    else:
        # axis column of R
        for i in range(3):
            s = R[3 * i + 2]
            if stype == _CAPSULE:
                e[i] = p[1] * fabs(s) + p[0]
            else:
                a0 = 1.0 - s * s
                if a0 < 0.0:
                    a0 = 0.0
                e[i] = p[1] * fabs(s) + p[0] * sqrt(a0)
    for i in range(3):
        lo[i] = t[i] - e[i]
        hi[i] = t[i] + e[i]


cdef double _aabb_signed_c(const double* lo1, const double* hi1,
                           const double* lo2, const double* hi2) noexcept nogil:
    cdef double g[3]
    cdef double acc = 0.0
    cdef double mx
    cdef int i, any_pos = 0
    for i in range(3):
        g[i] = lo1[i] - hi2[i]
        if lo2[i] - hi1[i] > g[i]:
            g[i] = lo2[i] - hi1[i]
        if g[i] > 0.0:
            any_pos = 1
            acc += g[i] * g[i]
    if any_pos:
        return sqrt(acc)
    mx = g[0]
    if g[1] > mx:
        mx = g[1]
    if g[2] > mx:
        mx = g[2]
    return mx


# ---------------------------------------------------------------------------
# forward kinematics / Jacobians

cdef void _fk_c(const int* parents, const int* jtypes, const double* jaxes,
                const double* oq, const double* ot, const int* qmap, int L,
                const double* base_q, const double* base_t, const double* qj,
                double* lq, double* lt) noexcept nogil:
    cdef double q0[4]
    cdef double t0[3]
    cdef double qm[4]
    cdef double tmp[3]
    cdef double half, ang
    cdef int i, p, jt, k
    for i in range(L):
        jt = jtypes[i]
        if jt == _FLOATING:
            for k in range(4):
                lq[4 * i + k] = base_q[k]
            for k in range(3):
                lt[3 * i + k] = base_t[k]
            continue
        p = parents[i]
        _qmul(&lq[4 * p], &oq[4 * i], q0)
        _qrot(&lq[4 * p], &ot[3 * i], t0)
        for k in range(3):
            t0[k] += lt[3 * p + k]
        if jt == _REVOLUTE:
            ang = qj[qmap[i]]
            half = 0.5 * ang
            qm[0] = cos(half)
            qm[1] = sin(half) * jaxes[3 * i]
            qm[2] = sin(half) * jaxes[3 * i + 1]
            qm[3] = sin(half) * jaxes[3 * i + 2]
            _qmul(q0, qm, &lq[4 * i])
            for k in range(3):
                lt[3 * i + k] = t0[k]
        elif jt == _PRISMATIC:
            for k in range(4):
                lq[4 * i + k] = q0[k]
            tmp[0] = jaxes[3 * i] * qj[qmap[i]]
            tmp[1] = jaxes[3 * i + 1] * qj[qmap[i]]
            tmp[2] = jaxes[3 * i + 2] * qj[qmap[i]]
            _qrot(q0, tmp, &lt[3 * i])
            for k in range(3):
                lt[3 * i + k] += t0[k]
        else:
            for k in range(4):
                lq[4 * i + k] = q0[k]
            for k in range(3):
                lt[3 * i + k] = t0[k]


cdef void _point_jac_c(const int* parents, const int* jtypes, const double* jaxes,
                       const int* qmap, const double* lq, const double* lt,
                       int link, const double* p_world, int na, double* J) noexcept nogil:
    """J is 3 x (6+na), row-major, caller-zeroed."""
    cdef double Rb[9]
    cdef double rb[3]
    cdef double d[3]
    cdef double a_w[3]
    cdef double col[3]
    cdef int i, k, dofs
    dofs = 6 + na
    J[0] = 1.0
    J[dofs + 1] = 1.0
    J[2 * dofs + 2] = 1.0
    _qmat(&lq[0], Rb)
    for k in range(3):
        d[k] = p_world[k] - lt[k]
    _Rtv(Rb, d, rb)
    # columns 3..5 = -Rb [rb]x
    J[3] = -(Rb[1] * rb[2] - Rb[2] * rb[1])
    J[4] = -(Rb[2] * rb[0] - Rb[0] * rb[2])
    J[5] = -(Rb[0] * rb[1] - Rb[1] * rb[0])
    J[dofs + 3] = -(Rb[4] * rb[2] - Rb[5] * rb[1])
    J[dofs + 4] = -(Rb[5] * rb[0] - Rb[3] * rb[2])
    J[dofs + 5] = -(Rb[3] * rb[1] - Rb[4] * rb[0])
    J[2 * dofs + 3] = -(Rb[7] * rb[2] - Rb[8] * rb[1])
    J[2 * dofs + 4] = -(Rb[8] * rb[0] - Rb[6] * rb[2])
    J[2 * dofs + 5] = -(Rb[6] * rb[1] - Rb[7] * rb[0])
    i = link
    while jtypes[i] != _FLOATING:
        if jtypes[i] == _REVOLUTE:
            _qrot(&lq[4 * i], &jaxes[3 * i], a_w)
            for k in range(3):
                d[k] = p_world[k] - lt[3 * i + k]
            _cross3(a_w, d, col)
            J[6 + qmap[i]] = col[0]
            J[dofs + 6 + qmap[i]] = col[1]
            J[2 * dofs + 6 + qmap[i]] = col[2]
        elif jtypes[i] == _PRISMATIC:
            _qrot(&lq[4 * i], &jaxes[3 * i], a_w)
            J[6 + qmap[i]] = a_w[0]
            J[dofs + 6 + qmap[i]] = a_w[1]
            J[2 * dofs + 6 + qmap[i]] = a_w[2]
        i = parents[i]


# ---------------------------------------------------------------------------
# python-facing wrappers (parity surface with _core_py)

def support_point_local(int stype, double[::1] params, double[::1] d):
    out = np.empty(3)
    cdef double[::1] ov = out
    _support_full_local(stype, &params[0], &d[0], &ov[0])
    return out


def aabb_of_posed(int stype, double[::1] params, double[::1] q, double[::1] t):
    lo = np.empty(3)
    hi = np.empty(3)
    cdef double[::1] lov = lo
    cdef double[::1] hiv = hi
    _aabb_posed_c(stype, &params[0], &q[0], &t[0], &lov[0], &hiv[0])
    return lo, hi


def pair_distance_raw(int stA, double[::1] pA, double[::1] qA, double[::1] tA,
                      int stB, double[::1] pB, double[::1] qB, double[::1] tB):
    cdef double W[4][3]
    cdef double WA[4][3]
    cdef double WB[4][3]
    cdef double dist = 0.0, lower = 0.0
    cdef double wa[3]
    cdef double wb[3]
    cdef double axis[3]
    cdef int cons = 0, nsimp = 0, st, i, j
    wa[0] = wa[1] = wa[2] = 0.0
    wb[0] = wb[1] = wb[2] = 0.0
    axis[0] = axis[1] = axis[2] = 0.0
    st = _pair_core(stA, &pA[0], &qA[0], &tA[0], stB, &pB[0], &qB[0], &tB[0],
                    &dist, wa, wb, axis, &cons, W, WA, WB, &nsimp, &lower)
    Wn = np.zeros((4, 3))
    An = np.zeros((4, 3))
    Bn = np.zeros((4, 3))
    for i in range(nsimp):
        for j in range(3):
            Wn[i, j] = W[i][j]
            An[i, j] = WA[i][j]
            Bn[i, j] = WB[i][j]
    return (st, dist, np.array([wa[0], wa[1], wa[2]]),
            np.array([wb[0], wb[1], wb[2]]), cons,
            np.array([axis[0], axis[1], axis[2]]), Wn, An, Bn, nsimp, lower)


def fk_links(int[::1] parents, int[::1] jtypes, double[:, ::1] jaxes,
             double[:, ::1] oq, double[:, ::1] ot, int[::1] qmap,
             double[::1] base_q, double[::1] base_t, double[::1] qj):
    cdef int L = parents.shape[0]
    lq = np.empty((L, 4))
    lt = np.empty((L, 3))
    cdef double[:, ::1] lqv = lq
    cdef double[:, ::1] ltv = lt
    cdef const double* qj_ptr = NULL
    if qj.shape[0] > 0:
        qj_ptr = &qj[0]
    _fk_c(&parents[0], &jtypes[0], &jaxes[0, 0], &oq[0, 0], &ot[0, 0], &qmap[0],
          L, &base_q[0], &base_t[0], qj_ptr, &lqv[0, 0], &ltv[0, 0])
    return lq, lt


def point_jacobian_arrays(int[::1] parents, int[::1] jtypes, double[:, ::1] jaxes,
                          int[::1] qmap, double[:, ::1] lq, double[:, ::1] lt,
                          int link, double[::1] p_world, int na):
    J = np.zeros((3, 6 + na))
    cdef double[:, ::1] Jv = J
    _point_jac_c(&parents[0], &jtypes[0], &jaxes[0, 0], &qmap[0],
                 &lq[0, 0], &lt[0, 0], link, &p_world[0], na, &Jv[0, 0])
    return J


cdef void _posed_bodies_c(const int* blink, const double* bq, const double* bt,
                          const double* lq, const double* lt, int B,
                          double* wq, double* wt) noexcept nogil:
    cdef int k, i, j
    for k in range(B):
        i = blink[k]
        _qmul(&lq[4 * i], &bq[4 * k], &wq[4 * k])
        _qrot(&lq[4 * i], &bt[3 * k], &wt[3 * k])
        for j in range(3):
            wt[3 * k + j] += lt[3 * i + j]


cdef void _grad_row_c(const int* parents, const int* jtypes, const double* jaxes,
                      const int* qmap, const double* lq, const double* lt,
                      int linkA, int linkB, const double* pa, const double* pb,
                      const double* axis, int na, double* JA, double* JB,
                      double* row) noexcept nogil:
    cdef int dofs = 6 + na
    cdef int c
    for c in range(3 * dofs):
        JA[c] = 0.0
        JB[c] = 0.0
    _point_jac_c(parents, jtypes, jaxes, qmap, lq, lt, linkA, pa, na, JA)
    _point_jac_c(parents, jtypes, jaxes, qmap, lq, lt, linkB, pb, na, JB)
    for c in range(dofs):
        row[c] = (axis[0] * (JA[c] - JB[c])
                  + axis[1] * (JA[dofs + c] - JB[dofs + c])
                  + axis[2] * (JA[2 * dofs + c] - JB[2 * dofs + c]))


def self_pairs_eval(int[::1] parents, int[::1] jtypes, double[:, ::1] jaxes,
                    double[:, ::1] oq, double[:, ::1] ot, int[::1] qmap,
                    int[::1] blink, int[::1] btype, double[:, ::1] bparams,
                    double[:, ::1] bq, double[:, ::1] bt,
                    int[:, ::1] pairs, double[::1] base_q, double[::1] base_t,
                    double[::1] qj, double[::1] epsilon, int want_grad):
    cdef int L = parents.shape[0]
    cdef int B = blink.shape[0]
    cdef int P = pairs.shape[0]
    cdef int na = qj.shape[0]
    cdef int dofs = 6 + na
    lq = np.empty((L, 4)); lt = np.empty((L, 3))
    wq = np.empty((B, 4)); wt = np.empty((B, 3))
    h = np.zeros(P)
    grad = np.zeros((P, dofs))
    status = np.zeros(P, dtype=np.int32)
    wa_arr = np.zeros((P, 3))
    wb_arr = np.zeros((P, 3))
    JA = np.zeros(3 * dofs); JB = np.zeros(3 * dofs)
    cdef double[:, ::1] lqv = lq, ltv = lt, wqv = wq, wtv = wt
    cdef double[::1] hv = h
    cdef double[:, ::1] gv = grad
    cdef int[::1] sv = status
    cdef double[:, ::1] wav = wa_arr, wbv = wb_arr
    cdef double[::1] JAv = JA, JBv = JB
    cdef double W[4][3]
    cdef double WAs[4][3]
    cdef double WBs[4][3]
    cdef double dist = 0.0, lower = 0.0
    cdef double wa[3]
    cdef double wb[3]
    cdef double axis[3]
    cdef int cons = 0, nsimp = 0, st, k, ia, ib, c
    cdef const double* qj_ptr = NULL
    if na > 0:
        qj_ptr = &qj[0]
    _fk_c(&parents[0], &jtypes[0], &jaxes[0, 0], &oq[0, 0], &ot[0, 0], &qmap[0],
          L, &base_q[0], &base_t[0], qj_ptr, &lqv[0, 0], &ltv[0, 0])
    _posed_bodies_c(&blink[0], &bq[0, 0], &bt[0, 0], &lqv[0, 0], &ltv[0, 0], B,
                    &wqv[0, 0], &wtv[0, 0])
    for k in range(P):
        ia = pairs[k, 0]
        ib = pairs[k, 1]
        st = _pair_core(btype[ia], &bparams[ia, 0], &wqv[ia, 0], &wtv[ia, 0],
                        btype[ib], &bparams[ib, 0], &wqv[ib, 0], &wtv[ib, 0],
                        &dist, wa, wb, axis, &cons, W, WAs, WBs, &nsimp, &lower)
        if st != _OK:
            sv[k] = st
            continue
        hv[k] = dist - epsilon[k]
        for c in range(3):
            wav[k, c] = wa[c]
            wbv[k, c] = wb[c]
        if want_grad:
            _grad_row_c(&parents[0], &jtypes[0], &jaxes[0, 0], &qmap[0],
                        &lqv[0, 0], &ltv[0, 0], blink[ia], blink[ib],
                        wa, wb, axis, na, &JAv[0], &JBv[0], &gv[k, 0])
    return h, grad, status, wa_arr, wb_arr


# --- broadphase tree (small, rebuilt per evaluation) ------------------------

cdef struct TreeNode:
    double lo[3]
    double hi[3]
    int left
    int right
    int body


cdef int _build_tree_c(const double* los, const double* his, int* order,
                       int start, int end, TreeNode* nodes, int* n_nodes) noexcept nogil:
    """Median split by centroid on the widest axis; stable insertion sort."""
    cdef int me = n_nodes[0]
    cdef int i, j, k, axis, half, key
    cdef double cmin[3]
    cdef double cmax[3]
    cdef double c, best, ckey
    n_nodes[0] += 1
    for k in range(3):
        nodes[me].lo[k] = INFINITY
        nodes[me].hi[k] = -INFINITY
    for i in range(start, end):
        j = order[i]
        for k in range(3):
            if los[3 * j + k] < nodes[me].lo[k]:
                nodes[me].lo[k] = los[3 * j + k]
            if his[3 * j + k] > nodes[me].hi[k]:
                nodes[me].hi[k] = his[3 * j + k]
    nodes[me].left = -1
    nodes[me].right = -1
    nodes[me].body = -1
    if end - start == 1:
        nodes[me].body = order[start]
        return me
    for k in range(3):
        cmin[k] = INFINITY
        cmax[k] = -INFINITY
    for i in range(start, end):
        j = order[i]
        for k in range(3):
            c = 0.5 * (los[3 * j + k] + his[3 * j + k])
            if c < cmin[k]:
                cmin[k] = c
            if c > cmax[k]:
                cmax[k] = c
    axis = 0
    best = cmax[0] - cmin[0]
    if cmax[1] - cmin[1] > best:
        axis = 1
        best = cmax[1] - cmin[1]
    if cmax[2] - cmin[2] > best:
        axis = 2
    # stable insertion sort of order[start:end] by centroid along axis
    for i in range(start + 1, end):
        key = order[i]
        ckey = 0.5 * (los[3 * key + axis] + his[3 * key + axis])
        j = i - 1
        while j >= start and 0.5 * (los[3 * order[j] + axis] + his[3 * order[j] + axis]) > ckey:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = key
    half = (end - start) // 2
    nodes[me].left = _build_tree_c(los, his, order, start, start + half, nodes, n_nodes)
    nodes[me].right = _build_tree_c(los, his, order, start + half, end, nodes, n_nodes)
    return me


def self_broadphase_eval(int[::1] parents, int[::1] jtypes, double[:, ::1] jaxes,
                         double[:, ::1] oq, double[:, ::1] ot, int[::1] qmap,
                         int[::1] blink, int[::1] btype, double[:, ::1] bparams,
                         double[:, ::1] bq, double[:, ::1] bt,
                         int[::1] arm_idx, int[::1] base_idx,
                         double[::1] base_q, double[::1] base_t,
                         double[::1] qj, double[::1] epsilon, int want_grad):
    cdef int L = parents.shape[0]
    cdef int B = blink.shape[0]
    cdef int A = arm_idx.shape[0]
    cdef int NB = base_idx.shape[0]
    cdef int na = qj.shape[0]
    cdef int dofs = 6 + na
    lq = np.empty((L, 4)); lt = np.empty((L, 3))
    wq = np.empty((B, 4)); wt = np.empty((B, 3))
    h = np.zeros(A)
    grad = np.zeros((A, dofs))
    winner = np.full(A, -1, dtype=np.int32)
    status = np.zeros(A, dtype=np.int32)
    wa_arr = np.zeros((A, 3))
    wb_arr = np.zeros((A, 3))
    JA = np.zeros(3 * dofs); JB = np.zeros(3 * dofs)
    los = np.empty((NB, 3)); his = np.empty((NB, 3))
    order = np.empty(NB, dtype=np.int32)
    cdef double[:, ::1] lqv = lq, ltv = lt, wqv = wq, wtv = wt
    cdef double[::1] hv = h
    cdef double[:, ::1] gv = grad
    cdef int[::1] winv = winner, sv = status
    cdef double[:, ::1] wav = wa_arr, wbv = wb_arr
    cdef double[::1] JAv = JA, JBv = JB
    cdef double[:, ::1] losv = los, hisv = his
    cdef int[::1] orderv = order
    cdef TreeNode nodes[63]  # supports up to 32 base bodies
    cdef int n_nodes = 0
    cdef int stack[64]
    cdef int sp
    cdef double W[4][3]
    cdef double WAs[4][3]
    cdef double WBs[4][3]
    cdef double dist = 0.0, lower = 0.0, lb, dl, dr, best_dist
    cdef double wa[3]
    cdef double wb[3]
    cdef double axis[3]
    cdef double qlo[3]
    cdef double qhi[3]
    cdef double bwa[3]
    cdef double bwb[3]
    cdef double baxis[3]
    cdef int cons = 0, nsimp = 0, st, k, ia, ib, c, a, nid, body, best_body, fail
    cdef const double* qj_ptr = NULL
    if na > 0:
        qj_ptr = &qj[0]
    if NB > 32:
        raise ValueError("broadphase base group larger than 32 bodies")
    _fk_c(&parents[0], &jtypes[0], &jaxes[0, 0], &oq[0, 0], &ot[0, 0], &qmap[0],
          L, &base_q[0], &base_t[0], qj_ptr, &lqv[0, 0], &ltv[0, 0])
    _posed_bodies_c(&blink[0], &bq[0, 0], &bt[0, 0], &lqv[0, 0], &ltv[0, 0], B,
                    &wqv[0, 0], &wtv[0, 0])
    for k in range(NB):
        ib = base_idx[k]
        _aabb_posed_c(btype[ib], &bparams[ib, 0], &wqv[ib, 0], &wtv[ib, 0],
                      &losv[k, 0], &hisv[k, 0])
        orderv[k] = k
    _build_tree_c(&losv[0, 0], &hisv[0, 0], &orderv[0], 0, NB, nodes, &n_nodes)
    for a in range(A):
        ia = arm_idx[a]
        _aabb_posed_c(btype[ia], &bparams[ia, 0], &wqv[ia, 0], &wtv[ia, 0], qlo, qhi)
        best_dist = INFINITY
        best_body = -1
        fail = 0
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            nid = stack[sp]
            lb = _aabb_signed_c(qlo, qhi, nodes[nid].lo, nodes[nid].hi)
            if lb > best_dist:
                continue
            body = nodes[nid].body
            if body >= 0:
                ib = base_idx[body]
                st = _pair_core(btype[ia], &bparams[ia, 0], &wqv[ia, 0], &wtv[ia, 0],
                                btype[ib], &bparams[ib, 0], &wqv[ib, 0], &wtv[ib, 0],
                                &dist, wa, wb, axis, &cons, W, WAs, WBs, &nsimp, &lower)
                if st != _OK:
                    sv[a] = st
                    winv[a] = ib
                    fail = 1
                    break
                if dist < best_dist or (dist == best_dist and body < best_body):
                    best_dist = dist
                    best_body = body
                    for c in range(3):
                        bwa[c] = wa[c]
                        bwb[c] = wb[c]
                        baxis[c] = axis[c]
                continue
            dl = _aabb_signed_c(qlo, qhi, nodes[nodes[nid].left].lo, nodes[nodes[nid].left].hi)
            dr = _aabb_signed_c(qlo, qhi, nodes[nodes[nid].right].lo, nodes[nodes[nid].right].hi)
            if dl <= dr:
                stack[sp] = nodes[nid].right
                sp += 1
                stack[sp] = nodes[nid].left
                sp += 1
            else:
                stack[sp] = nodes[nid].left
                sp += 1
                stack[sp] = nodes[nid].right
                sp += 1
        if fail:
            continue
        hv[a] = best_dist - epsilon[a]
        winv[a] = base_idx[best_body]
        for c in range(3):
            wav[a, c] = bwa[c]
            wbv[a, c] = bwb[c]
        if want_grad:
            _grad_row_c(&parents[0], &jtypes[0], &jaxes[0, 0], &qmap[0],
                        &lqv[0, 0], &ltv[0, 0], blink[ia], blink[base_idx[best_body]],
                        bwa, bwb, baxis, na, &JAv[0], &JBv[0], &gv[a, 0])
    return h, grad, winner, status, wa_arr, wb_arr


# ---------------------------------------------------------------------------
# ESDF queries

cdef int _trilinear_one(const double* dist_flat, const double* grad_flat,
                        const double* origin, double res, int nx, int ny, int nz,
                        const double* p, double* d_out, double* g_out) noexcept nogil:
    cdef double u[3]
    cdef double f[3]
    cdef long i0[3]
    cdef double acc_d = 0.0
    cdef double acc_g[3]
    cdef double wx, wy, wz, wgt
    cdef long idx
    cdef int dx, dy, dz, k
    for k in range(3):
        u[k] = (p[k] - origin[k]) / res - 0.5
        i0[k] = <long>(u[k]) if u[k] >= 0.0 else <long>(u[k]) - 1
        f[k] = u[k] - i0[k]
    if (i0[0] < 0 or i0[1] < 0 or i0[2] < 0
            or i0[0] + 1 >= nx or i0[1] + 1 >= ny or i0[2] + 1 >= nz):
        return 0
    acc_g[0] = acc_g[1] = acc_g[2] = 0.0
    for dz in range(2):
        wz = f[2] if dz else 1.0 - f[2]
        for dy in range(2):
            wy = f[1] if dy else 1.0 - f[1]
            for dx in range(2):
                wx = f[0] if dx else 1.0 - f[0]
                wgt = wx * wy * wz
                idx = (i0[0] + dx) + nx * ((i0[1] + dy) + ny * (i0[2] + dz))
                acc_d += wgt * dist_flat[idx]
                acc_g[0] += wgt * grad_flat[3 * idx]
                acc_g[1] += wgt * grad_flat[3 * idx + 1]
                acc_g[2] += wgt * grad_flat[3 * idx + 2]
    d_out[0] = acc_d
    g_out[0] = acc_g[0]
    g_out[1] = acc_g[1]
    g_out[2] = acc_g[2]
    return 1


def trilinear_batch(double[::1] dist_flat, double[:, ::1] grad_flat,
                    double[::1] origin, double res, int[::1] dims,
                    double[:, ::1] pts):
    cdef int M = pts.shape[0]
    d_out = np.zeros(M)
    g_out = np.zeros((M, 3))
    inb = np.zeros(M, dtype=np.uint8)
    cdef double[::1] dv = d_out
    cdef double[:, ::1] gv = g_out
    cdef unsigned char[::1] iv = inb
    cdef int m
    cdef double dd
    cdef double gg[3]
    for m in range(M):
        if _trilinear_one(&dist_flat[0], &grad_flat[0, 0], &origin[0], res,
                          dims[0], dims[1], dims[2], &pts[m, 0], &dd, gg):
            iv[m] = 1
            dv[m] = dd
            gv[m, 0] = gg[0]
            gv[m, 1] = gg[1]
            gv[m, 2] = gg[2]
    return d_out, g_out, inb


def sphere_env_eval(int[::1] parents, int[::1] jtypes, double[:, ::1] jaxes,
                    double[:, ::1] oq, double[:, ::1] ot, int[::1] qmap,
                    int[::1] slink, double[:, ::1] scenters, double[::1] sradii,
                    double[::1] dist_flat, double[:, ::1] grad_flat,
                    double[::1] origin, double res, int[::1] dims, double cap,
                    double[::1] base_q, double[::1] base_t, double[::1] qj,
                    int want_grad):
    cdef int L = parents.shape[0]
    cdef int S = slink.shape[0]
    cdef int na = qj.shape[0]
    cdef int dofs = 6 + na
    lq = np.empty((L, 4)); lt = np.empty((L, 3))
    h = np.empty(S)
    grad = np.zeros((S, dofs))
    oob = np.zeros(S, dtype=np.uint8)
    J = np.zeros(3 * dofs)
    cdef double[:, ::1] lqv = lq, ltv = lt
    cdef double[::1] hv = h
    cdef double[:, ::1] gv = grad
    cdef unsigned char[::1] ov = oob
    cdef double[::1] Jv = J
    cdef double center[3]
    cdef double dd
    cdef double gg[3]
    cdef int k, i, c
    cdef const double* qj_ptr = NULL
    if na > 0:
        qj_ptr = &qj[0]
    _fk_c(&parents[0], &jtypes[0], &jaxes[0, 0], &oq[0, 0], &ot[0, 0], &qmap[0],
          L, &base_q[0], &base_t[0], qj_ptr, &lqv[0, 0], &ltv[0, 0])
    for k in range(S):
        i = slink[k]
        _qrot(&lqv[i, 0], &scenters[k, 0], center)
        for c in range(3):
            center[c] += ltv[i, c]
        if not _trilinear_one(&dist_flat[0], &grad_flat[0, 0], &origin[0], res,
                              dims[0], dims[1], dims[2], center, &dd, gg):
            ov[k] = 1
            hv[k] = cap - sradii[k]
            continue
        hv[k] = dd - sradii[k]
        if want_grad:
            for c in range(3 * dofs):
                Jv[c] = 0.0
            _point_jac_c(&parents[0], &jtypes[0], &jaxes[0, 0], &qmap[0],
                         &lqv[0, 0], &ltv[0, 0], i, center, na, &Jv[0])
            for c in range(dofs):
                gv[k, c] = (gg[0] * Jv[c] + gg[1] * Jv[dofs + c]
                            + gg[2] * Jv[2 * dofs + c])
    return h, grad, oob


def voxel_nearest_eval(int[::1] parents, int[::1] jtypes, double[:, ::1] jaxes,
                       double[:, ::1] oq, double[:, ::1] ot, int[::1] qmap,
                       int[::1] blink, int[::1] btype, double[:, ::1] bparams,
                       double[:, ::1] bq, double[:, ::1] bt, int[::1] body_sel,
                       tree, double[:, ::1] centers, double half,
                       double[::1] base_q, double[::1] base_t, double[::1] qj,
                       double epsilon, int want_grad):
    """Traverses a prebuilt static voxel tree (arrays from build_voxel_tree)."""
    node_lo_o, node_hi_o, node_left_o, node_right_o, node_body_o = tree
    node_lo_a = np.ascontiguousarray(node_lo_o)
    node_hi_a = np.ascontiguousarray(node_hi_o)
    node_left_a = np.ascontiguousarray(node_left_o, dtype=np.int32)
    node_right_a = np.ascontiguousarray(node_right_o, dtype=np.int32)
    node_body_a = np.ascontiguousarray(node_body_o, dtype=np.int32)
    cdef double[:, ::1] nlo = node_lo_a, nhi = node_hi_a
    cdef int[::1] nleft = node_left_a, nright = node_right_a, nbody = node_body_a
    cdef int L = parents.shape[0]
    cdef int B = blink.shape[0]
    cdef int NS = body_sel.shape[0]
    cdef int na = qj.shape[0]
    cdef int dofs = 6 + na
    lq = np.empty((L, 4)); lt = np.empty((L, 3))
    wq = np.empty((B, 4)); wt = np.empty((B, 3))
    h = np.zeros(NS)
    grad = np.zeros((NS, dofs))
    winner = np.full(NS, -1, dtype=np.int32)
    status = np.zeros(NS, dtype=np.int32)
    J = np.zeros(3 * dofs)
    stack_arr = np.empty(2 * node_lo_a.shape[0] + 8, dtype=np.int32)
    cdef double[:, ::1] lqv = lq, ltv = lt, wqv = wq, wtv = wt
    cdef double[::1] hv = h
    cdef double[:, ::1] gv = grad
    cdef int[::1] winv = winner, sv = status
    cdef double[::1] Jv = J
    cdef int[::1] stackv = stack_arr
    cdef double box_params[4]
    cdef double qid[4]
    cdef double vc[3]
    cdef double W[4][3]
    cdef double WAs[4][3]
    cdef double WBs[4][3]
    cdef double dist = 0.0, lower = 0.0, lb, dl, dr, best_dist
    cdef double wa[3]
    cdef double wb[3]
    cdef double axis[3]
    cdef double qlo[3]
    cdef double qhi[3]
    cdef double bwa[3]
    cdef double baxis[3]
    cdef int cons = 0, nsimp = 0, st, k, ib, c, nid, body, best_body, sp, fail
    cdef const double* qj_ptr = NULL
    if na > 0:
        qj_ptr = &qj[0]
    box_params[0] = half; box_params[1] = half; box_params[2] = half; box_params[3] = 0.0
    qid[0] = 1.0; qid[1] = 0.0; qid[2] = 0.0; qid[3] = 0.0
    _fk_c(&parents[0], &jtypes[0], &jaxes[0, 0], &oq[0, 0], &ot[0, 0], &qmap[0],
          L, &base_q[0], &base_t[0], qj_ptr, &lqv[0, 0], &ltv[0, 0])
    _posed_bodies_c(&blink[0], &bq[0, 0], &bt[0, 0], &lqv[0, 0], &ltv[0, 0], B,
                    &wqv[0, 0], &wtv[0, 0])
    for k in range(NS):
        ib = body_sel[k]
        _aabb_posed_c(btype[ib], &bparams[ib, 0], &wqv[ib, 0], &wtv[ib, 0], qlo, qhi)
        best_dist = INFINITY
        best_body = -1
        fail = 0
        sp = 0
        stackv[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            nid = stackv[sp]
            lb = _aabb_signed_c(qlo, qhi, &nlo[nid, 0], &nhi[nid, 0])
            if lb > best_dist:
                continue
            body = nbody[nid]
            if body >= 0:
                for c in range(3):
                    vc[c] = centers[body, c]
                st = _pair_core(btype[ib], &bparams[ib, 0], &wqv[ib, 0], &wtv[ib, 0],
                                _BOX, box_params, qid, vc,
                                &dist, wa, wb, axis, &cons, W, WAs, WBs, &nsimp, &lower)
                if st != _OK:
                    sv[k] = st
                    winv[k] = body
                    fail = 1
                    break
                if dist < best_dist or (dist == best_dist and body < best_body):
                    best_dist = dist
                    best_body = body
                    for c in range(3):
                        bwa[c] = wa[c]
                        baxis[c] = axis[c]
                continue
            dl = _aabb_signed_c(qlo, qhi, &nlo[nleft[nid], 0], &nhi[nleft[nid], 0])
            dr = _aabb_signed_c(qlo, qhi, &nlo[nright[nid], 0], &nhi[nright[nid], 0])
            if dl <= dr:
                stackv[sp] = nright[nid]
                sp += 1
                stackv[sp] = nleft[nid]
                sp += 1
            else:
                stackv[sp] = nleft[nid]
                sp += 1
                stackv[sp] = nright[nid]
                sp += 1
        if fail:
            continue
        hv[k] = best_dist - epsilon
        winv[k] = best_body
        if want_grad:
            for c in range(3 * dofs):
                Jv[c] = 0.0
            _point_jac_c(&parents[0], &jtypes[0], &jaxes[0, 0], &qmap[0],
                         &lqv[0, 0], &ltv[0, 0], blink[ib], bwa, na, &Jv[0])
            for c in range(dofs):
                gv[k, c] = (baxis[0] * Jv[c] + baxis[1] * Jv[dofs + c]
                            + baxis[2] * Jv[2 * dofs + c])
    return h, grad, winner, status


# ---------------------------------------------------------------------------
# integrator

def integrate_rk4(double[::1] base_q, double[::1] base_t, double[::1] qj,
                  double[::1] u, double dt):
    cdef double wq[4]
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double tmp[4]
    cdef double n
    cdef int i
    cdef int na = qj.shape[0]
    wq[0] = 0.0
    wq[1] = u[3]
    wq[2] = u[4]
    wq[3] = u[5]
    q_out = np.empty(4)
    t_out = np.empty(3)
    qj_out = np.empty(na)
    cdef double[::1] qv = q_out, tv = t_out, jv = qj_out
    cdef double q0[4]
    for i in range(4):
        q0[i] = base_q[i]
    _qmul(q0, wq, k1)
    for i in range(4):
        k1[i] *= 0.5
        tmp[i] = q0[i] + 0.5 * dt * k1[i]
    _qmul(tmp, wq, k2)
    for i in range(4):
        k2[i] *= 0.5
        tmp[i] = q0[i] + 0.5 * dt * k2[i]
    _qmul(tmp, wq, k3)
    for i in range(4):
        k3[i] *= 0.5
        tmp[i] = q0[i] + dt * k3[i]
    _qmul(tmp, wq, k4)
    for i in range(4):
        k4[i] *= 0.5
        tmp[i] = q0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    n = sqrt(tmp[0] * tmp[0] + tmp[1] * tmp[1] + tmp[2] * tmp[2] + tmp[3] * tmp[3])
    for i in range(4):
        qv[i] = tmp[i] / n
    for i in range(3):
        tv[i] = base_t[i] + dt * u[i]
    for i in range(na):
        jv[i] = qj[i] + dt * u[6 + i]
    return q_out, t_out, qj_out
