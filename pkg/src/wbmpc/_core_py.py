"""Pure-Python fallback for the hot query kernels.

Mirrors the compiled extension `wbmpc._core` function for function; the
compiled module is preferred at import time (see `wbmpc.backend`). Keep the
two implementations semantically identical -- the parity test suite compares
them on randomized inputs.

Conventions shared with the compiled twin:
  * quaternions (w, x, y, z), rotations active
  * shape params packed as 4 doubles:
      sphere   [r, 0, 0, 0]
      box      [hx, hy, hz, 0]
      cylinder [r, hl, 0, 0]   (axis = local z)
      capsule  [r, hl, 0, 0]   (axis = local z)
  * pair status codes: 0 resolved, 1 needs EPA, 2 degenerate normal,
    3 GJK did not converge
  * ESDF lattices are flat, x-fastest (idx = ix + nx*(iy + ny*iz))
"""

import numpy as np

IS_COMPILED = False

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
_ABS_EPS = 1e-12


# ---------------------------------------------------------------------------
# quaternion helpers (scalar, local to the kernels)

def _quat_mul(a, b):
    return np.array(
        [
            a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
        ]
    )


def _quat_rot(q, v):
    u = q[1:]
    return v + 2.0 * np.cross(u, np.cross(u, v) + q[0] * v)


def _quat_rot_inv(q, v):
    u = -q[1:]
    return v + 2.0 * np.cross(u, np.cross(u, v) + q[0] * v)


def _quat_to_mat(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _quat_axis_angle(axis, angle):
    half = 0.5 * angle
    q = np.empty(4)
    q[0] = np.cos(half)
    q[1:] = np.sin(half) * axis
    return q


# ---------------------------------------------------------------------------
# support functions

def support_point_local(stype, params, d):
    """Farthest point of the full shape along local direction d."""
    if stype == SHAPE_SPHERE:
        n = np.linalg.norm(d)
        return params[0] * d / n
    if stype == SHAPE_BOX:
        return np.where(d >= 0.0, 1.0, -1.0)[:3] * params[:3]
    if stype == SHAPE_CYLINDER:
        r, hl = params[0], params[1]
        rho = np.hypot(d[0], d[1])
        z = hl if d[2] >= 0.0 else -hl
        if rho < _ABS_EPS:
            return np.array([0.0, 0.0, z])
        return np.array([r * d[0] / rho, r * d[1] / rho, z])
    # capsule
    r, hl = params[0], params[1]
    n = np.linalg.norm(d)
    tip = np.array([0.0, 0.0, hl if d[2] >= 0.0 else -hl])
    return tip + r * d / n


def _core_of(stype, params):
    """Margin decomposition: returns (core_type, core_params, margin)."""
    if stype == SHAPE_SPHERE:
        return SHAPE_SPHERE, np.zeros(4), params[0]  # point core
    if stype == SHAPE_CAPSULE:
        p = np.array([0.0, params[1], 0.0, 0.0])
        return SHAPE_CAPSULE, p, params[0]  # segment core
    return stype, params.copy(), 0.0


def _support_core_local(stype, params, d):
    if stype == SHAPE_SPHERE:
        return np.zeros(3)  # point
    if stype == SHAPE_CAPSULE:
        hl = params[1]
        return np.array([0.0, 0.0, hl if d[2] >= 0.0 else -hl])  # segment
    if stype == SHAPE_BOX:
        return np.where(d >= 0.0, 1.0, -1.0)[:3] * params[:3]
    r, hl = params[0], params[1]
    rho = np.hypot(d[0], d[1])
    z = hl if d[2] >= 0.0 else -hl
    if rho < _ABS_EPS:
        return np.array([0.0, 0.0, z])
    return np.array([r * d[0] / rho, r * d[1] / rho, z])


def _support_core_world(stype, params, R, t, d_world):
    d_local = R.T @ d_world
    return R @ _support_core_local(stype, params, d_local) + t


# ---------------------------------------------------------------------------
# GJK distance (subset enumeration subalgorithm: robust, portable)

_SUBSETS = [
    [0], [1], [2], [3],
    [0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3],
    [0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3],
    [0, 1, 2, 3],
]


def _affine_project(W, idx):
    """Project origin on aff(W[idx]); returns barycentrics or None."""
    k = len(idx)
    if k == 1:
        return np.array([1.0])
    w0 = W[idx[0]]
    D = np.array([W[i] - w0 for i in idx[1:]])  # (k-1, 3)
    G = D @ D.T
    b = -(D @ w0)
    if k == 2:
        if G[0, 0] < 1e-18:
            return None
        mu = np.array([b[0] / G[0, 0]])
    elif k == 3:
        det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
        if abs(det) < 1e-18:
            return None
        mu = np.array(
            [
                (b[0] * G[1, 1] - b[1] * G[0, 1]) / det,
                (G[0, 0] * b[1] - G[1, 0] * b[0]) / det,
            ]
        )
    else:
        det = np.linalg.det(G)
        if abs(det) < 1e-24:
            return None
        mu = np.linalg.solve(G, b)
    lam = np.empty(k)
    lam[1:] = mu
    lam[0] = 1.0 - mu.sum()
    return lam


def _closest_on_simplex(W, n):
    """Closest point of conv(W[:n]) to the origin.

    Returns (v, keep_idx, lambdas). Enumerates every sub-simplex, keeps
    feasible projections, picks the smallest; ties prefer fewer vertices.
    """
    best_d2 = np.inf
    best = None
    for idx in _SUBSETS:
        if idx[-1] >= n:
            continue
        lam = _affine_project(W, idx)
        if lam is None or np.any(lam < -1e-12):
            continue
        lam = np.clip(lam, 0.0, None)
        s = lam.sum()
        lam = lam / s
        v = lam @ W[idx]
        d2 = float(v @ v)
        # subsets enumerate smallest-first, so on ties the lean one is kept
        if best is None or d2 < best_d2 - 1e-14 * max(1.0, best_d2):
            best_d2 = d2
            best = (v, idx, lam)
    return best


def _gjk(coreA, pA, RA, tA, coreB, pB, RB, tB):
    """GJK on margin-reduced cores.

    Returns (kind, dist, wit_a, wit_b, W, WA, WB, n, lower_bound) with
    kind: 0 separated/converged, 1 cores intersect, 3 no convergence.
    """
    W = np.zeros((4, 3))
    WA = np.zeros((4, 3))
    WB = np.zeros((4, 3))
    v = tA - tB
    if v @ v < _ABS_EPS * _ABS_EPS:
        v = np.array([1.0, 0.0, 0.0])
    n = 0
    lam = None
    keep = None
    lower = 0.0
    prev_d2 = np.inf
    for _ in range(GJK_MAX_ITERS):
        d2 = float(v @ v)
        if d2 < _ABS_EPS * _ABS_EPS:
            return 1, 0.0, None, None, W, WA, WB, n, lower
        d = -v
        sa = _support_core_world(coreA, pA, RA, tA, d)
        sb = _support_core_world(coreB, pB, RB, tB, -d)
        w = sa - sb
        vd = np.sqrt(d2)
        lower = max(lower, float(v @ w) / vd)
        # no significant progress toward the origin: converged
        # (only meaningful once v is a point of the simplex hull)
        if n > 0 and d2 - float(v @ w) <= GJK_REL_TOL * d2:
            break
        dup = False
        for j in range(n):
            if np.max(np.abs(W[j] - w)) < 1e-14:
                dup = True
                break
        if dup:
            break
        W[n] = w
        WA[n] = sa
        WB[n] = sb
        n += 1
        v, keep, lam = _closest_on_simplex(W, n)
        # compact the simplex to the winning subset
        m = len(keep)
        W[:m] = W[keep]
        WA[:m] = WA[keep]
        WB[:m] = WB[keep]
        n = m
        d2 = float(v @ v)
        if n == 4 or d2 < _ABS_EPS * _ABS_EPS:
            return 1, 0.0, None, None, W, WA, WB, n, lower
        # |v| is non-increasing in exact arithmetic; a stall means the
        # iteration is float-limited and the current estimate is converged
        if d2 >= prev_d2 * (1.0 - 1e-13):
            break
        prev_d2 = d2
    else:
        return 3, float(np.linalg.norm(v)), None, None, W, WA, WB, n, lower
    wit_a = lam @ WA[:n]
    wit_b = lam @ WB[:n]
    return 0, float(np.linalg.norm(v)), wit_a, wit_b, W, WA, WB, n, lower


# ---------------------------------------------------------------------------
# analytic pair kernels

def _closest_segment_segment(p1, q1, p2, q2):
    """Closest points between segments [p1,q1] and [p2,q2] (Ericson 5.1.9)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    if a < 1e-18 and e < 1e-18:
        return p1, p2
    if a < 1e-18:
        t = np.clip(f / e, 0.0, 1.0)
        return p1, p2 + t * d2
    c = float(d1 @ r)
    if e < 1e-18:
        s = np.clip(-c / a, 0.0, 1.0)
        return p1 + s * d1, p2
    b = float(d1 @ d2)
    den = a * e - b * b
    s = np.clip((b * f - c * e) / den, 0.0, 1.0) if den > 1e-18 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = np.clip(-c / a, 0.0, 1.0)
    elif t > 1.0:
        t = 1.0
        s = np.clip((b - c) / a, 0.0, 1.0)
    return p1 + s * d1, p2 + t * d2


def _sphere_like_result(ca, ra, cb, rb):
    """Signed distance between two spheres given centers and radii."""
    u = ca - cb
    L = float(np.linalg.norm(u))
    if L < 1e-12:
        return None
    un = u / L
    dist = L - ra - rb
    pa = ca - ra * un
    pb = cb + rb * un
    return dist, pa, pb, un


def _segment_world(params, R, t):
    hl = params[1]
    axis = R[:, 2]
    return t - hl * axis, t + hl * axis


# ---------------------------------------------------------------------------
# pair distance

def pair_distance_raw(stA, pA, qA, tA, stB, pB, qB, tB):
    """Signed distance between two posed primitives.

    Returns (status, dist, wit_a, wit_b, conservative, axis, W, WA, WB,
    nsimp, lower_bound). `axis` is the unit separation direction from body B
    toward body A; it stays well defined at touching contact. `needs EPA`
    results carry the terminal GJK simplex of the margin-reduced cores; the
    caller runs EPA and applies the margins.
    """
    RA = _quat_to_mat(qA)
    RB = _quat_to_mat(qB)
    z3 = np.zeros(3)
    z43 = np.zeros((4, 3))

    # analytic overrides
    if stA == SHAPE_SPHERE and stB == SHAPE_SPHERE:
        res = _sphere_like_result(tA, pA[0], tB, pB[0])
        if res is None:
            return PAIR_DEGENERATE, 0.0, z3, z3, 0, z3, z43, z43, z43, 0, 0.0
        return PAIR_OK, res[0], res[1], res[2], 0, res[3], z43, z43, z43, 0, 0.0
    if stA == SHAPE_SPHERE and stB == SHAPE_CAPSULE:
        a0, a1 = _segment_world(pB, RB, tB)
        ca, cb = _closest_segment_segment(tA, tA, a0, a1)
        res = _sphere_like_result(tA, pA[0], cb, pB[0])
        if res is None:
            return PAIR_DEGENERATE, 0.0, z3, z3, 0, z3, z43, z43, z43, 0, 0.0
        return PAIR_OK, res[0], res[1], res[2], 0, res[3], z43, z43, z43, 0, 0.0
    if stA == SHAPE_CAPSULE and stB == SHAPE_SPHERE:
        a0, a1 = _segment_world(pA, RA, tA)
        ca, cb = _closest_segment_segment(a0, a1, tB, tB)
        res = _sphere_like_result(ca, pA[0], tB, pB[0])
        if res is None:
            return PAIR_DEGENERATE, 0.0, z3, z3, 0, z3, z43, z43, z43, 0, 0.0
        return PAIR_OK, res[0], res[1], res[2], 0, res[3], z43, z43, z43, 0, 0.0
    if stA == SHAPE_CAPSULE and stB == SHAPE_CAPSULE:
        a0, a1 = _segment_world(pA, RA, tA)
        b0, b1 = _segment_world(pB, RB, tB)
        ca, cb = _closest_segment_segment(a0, a1, b0, b1)
        res = _sphere_like_result(ca, pA[0], cb, pB[0])
        if res is None:
            return PAIR_DEGENERATE, 0.0, z3, z3, 0, z3, z43, z43, z43, 0, 0.0
        return PAIR_OK, res[0], res[1], res[2], 0, res[3], z43, z43, z43, 0, 0.0

    coreA, cpA, mA = _core_of(stA, pA)
    coreB, cpB, mB = _core_of(stB, pB)
    kind, dist, wa, wb, W, WA, WB, nsimp, lower = _gjk(
        coreA, cpA, RA, tA, coreB, cpB, RB, tB
    )
    if kind == 3:
        return (
            PAIR_NO_CONVERGENCE, dist - mA - mB, z3, z3, 0, z3,
            W, WA, WB, nsimp, max(0.0, lower - mA - mB),
        )
    if kind == 0 and dist > 1e-9:
        signed = dist - mA - mB
        u = (wa - wb) / dist
        pa = wa - mA * u
        pb = wb + mB * u
        return PAIR_OK, signed, pa, pb, 0, u, z43, z43, z43, 0, 0.0
    # cores intersect (or touch): penetration path
    if stA == SHAPE_CYLINDER or stB == SHAPE_CYLINDER:
        # conservative capsule over-approximation of the cylinders
        nA = SHAPE_CAPSULE if stA == SHAPE_CYLINDER else stA
        nB = SHAPE_CAPSULE if stB == SHAPE_CYLINDER else stB
        out = pair_distance_raw(nA, pA.copy(), qA, tA, nB, pB.copy(), qB, tB)
        return (out[0], out[1], out[2], out[3], 1) + out[5:]
    return PAIR_NEEDS_EPA, 0.0, z3, z3, 0, z3, W, WA, WB, nsimp, 0.0


# ---------------------------------------------------------------------------
# AABBs

def aabb_of_posed(stype, params, q, t):
    R = _quat_to_mat(q)
    if stype == SHAPE_SPHERE:
        r = params[0]
        return t - r, t + r
    if stype == SHAPE_BOX:
        e = np.abs(R) @ params[:3]
        return t - e, t + e
    r, hl = params[0], params[1]
    a = R[:, 2]
    if stype == SHAPE_CAPSULE:
        e = hl * np.abs(a) + r
    else:
        e = hl * np.abs(a) + r * np.sqrt(np.maximum(0.0, 1.0 - a * a))
    return t - e, t + e


def _aabb_signed_distance(lo1, hi1, lo2, hi2):
    """Signed distance lower bound between two AABBs."""
    g = np.maximum(lo1 - hi2, lo2 - hi1)
    pos = g[g > 0.0]
    if pos.size:
        return float(np.sqrt(pos @ pos))
    return float(np.max(g))


# ---------------------------------------------------------------------------
# forward kinematics / Jacobians over packed model arrays

def fk_links(parents, jtypes, jaxes, oq, ot, qmap, base_q, base_t, qj):
    L = parents.shape[0]
    lq = np.empty((L, 4))
    lt = np.empty((L, 3))
    for i in range(L):
        jt = jtypes[i]
        if jt == JOINT_FLOATING:
            lq[i] = base_q
            lt[i] = base_t
            continue
        p = parents[i]
        q0 = _quat_mul(lq[p], oq[i])
        t0 = lt[p] + _quat_rot(lq[p], ot[i])
        if jt == JOINT_REVOLUTE:
            qm = _quat_axis_angle(jaxes[i], qj[qmap[i]])
            lq[i] = _quat_mul(q0, qm)
            lt[i] = t0
        elif jt == JOINT_PRISMATIC:
            lq[i] = q0
            lt[i] = t0 + _quat_rot(q0, jaxes[i] * qj[qmap[i]])
        else:
            lq[i] = q0
            lt[i] = t0
    return lq, lt


def point_jacobian_arrays(parents, jtypes, jaxes, qmap, lq, lt, link, p_world, na):
    """3 x (6+na) Jacobian of a world point on `link`.

    Columns map (v_world, omega_body, qdot) to the point's world velocity.
    """
    J = np.zeros((3, 6 + na))
    J[0, 0] = J[1, 1] = J[2, 2] = 1.0
    Rb = _quat_to_mat(lq[0])
    rb = Rb.T @ (p_world - lt[0])
    # -R [rb]x
    J[:, 3:6] = -Rb @ np.array(
        [[0.0, -rb[2], rb[1]], [rb[2], 0.0, -rb[0]], [-rb[1], rb[0], 0.0]]
    )
    i = link
    while jtypes[i] != JOINT_FLOATING:
        jt = jtypes[i]
        if jt == JOINT_REVOLUTE:
            a_w = _quat_rot(lq[i], jaxes[i])
            J[:, 6 + qmap[i]] = np.cross(a_w, p_world - lt[i])
        elif jt == JOINT_PRISMATIC:
            J[:, 6 + qmap[i]] = _quat_rot(lq[i], jaxes[i])
        i = parents[i]
    return J


# ---------------------------------------------------------------------------
# batched constraint kernels

def _posed_bodies(blink, bq, bt, lq, lt):
    B = blink.shape[0]
    wq = np.empty((B, 4))
    wt = np.empty((B, 3))
    for k in range(B):
        i = blink[k]
        wq[k] = _quat_mul(lq[i], bq[k])
        wt[k] = lt[i] + _quat_rot(lq[i], bt[k])
    return wq, wt


def _pair_grad_row(model, lq, lt, linkA, linkB, pa, pb, axis, na):
    # d(signed)/dx = axis . (J_A - J_B): the +/- of the distance and the flip
    # of the witness difference cancel, so the axis form holds in both the
    # separated and the penetrating regime.
    parents, jtypes, jaxes, qmap = model
    JA = point_jacobian_arrays(parents, jtypes, jaxes, qmap, lq, lt, linkA, pa, na)
    JB = point_jacobian_arrays(parents, jtypes, jaxes, qmap, lq, lt, linkB, pb, na)
    return axis @ (JA - JB)


def self_pairs_eval(
    parents, jtypes, jaxes, oq, ot, qmap,
    blink, btype, bparams, bq, bt,
    pairs, base_q, base_t, qj, epsilon, want_grad,
):
    """Narrow-phase evaluation of every listed collision pair.

    Returns (h, grad, status, wa, wb). Rows with nonzero status must be
    repaired by the caller (EPA / error handling).
    """
    na = qj.shape[0]
    lq, lt = fk_links(parents, jtypes, jaxes, oq, ot, qmap, base_q, base_t, qj)
    wq, wt = _posed_bodies(blink, bq, bt, lq, lt)
    P = pairs.shape[0]
    h = np.zeros(P)
    grad = np.zeros((P, 6 + na))
    status = np.zeros(P, dtype=np.int32)
    wa_arr = np.zeros((P, 3))
    wb_arr = np.zeros((P, 3))
    model = (parents, jtypes, jaxes, qmap)
    for k in range(P):
        ia, ib = pairs[k, 0], pairs[k, 1]
        st, dist, wa, wb, cons, axis, *_ = pair_distance_raw(
            btype[ia], bparams[ia], wq[ia], wt[ia],
            btype[ib], bparams[ib], wq[ib], wt[ib],
        )
        if st != PAIR_OK:
            status[k] = st
            continue
        h[k] = dist - epsilon[k]
        wa_arr[k] = wa
        wb_arr[k] = wb
        if want_grad:
            grad[k] = _pair_grad_row(
                model, lq, lt, blink[ia], blink[ib], wa, wb, axis, na
            )
    return h, grad, status, wa_arr, wb_arr


# --- broadphase: per-query median-split AABB tree over the base group ------

def _build_aabb_tree(los, his):
    """Median-split tree; leaves are single bodies. Returns flat arrays."""
    n = los.shape[0]
    node_lo = []
    node_hi = []
    node_left = []
    node_right = []
    node_body = []

    def build(idxs):
        me = len(node_lo)
        node_lo.append(np.min(los[idxs], axis=0))
        node_hi.append(np.max(his[idxs], axis=0))
        node_left.append(-1)
        node_right.append(-1)
        node_body.append(-1)
        if len(idxs) == 1:
            node_body[me] = int(idxs[0])
            return me
        cent = 0.5 * (los[idxs] + his[idxs])
        spread = cent.max(axis=0) - cent.min(axis=0)
        axis = int(np.argmax(spread))
        order = np.argsort(cent[:, axis], kind="stable")
        half = len(idxs) // 2
        node_left[me] = build(idxs[order[:half]])
        node_right[me] = build(idxs[order[half:]])
        return me

    build(np.arange(n))
    return (
        np.array(node_lo), np.array(node_hi),
        np.array(node_left, dtype=np.int32),
        np.array(node_right, dtype=np.int32),
        np.array(node_body, dtype=np.int32),
    )


def _nearest_in_tree(tree, qlo, qhi, narrow, trace=None):
    """Best-first nearest-body search.

    `narrow(body)` -> (status, dist, wa, wb, axis). Ties on distance resolve
    to the lowest body index. Returns (status, best_body, dist, wa, wb, axis).
    """
    node_lo, node_hi, node_left, node_right, node_body = tree
    best = (np.inf, -1, None, None, None)
    stack = [0]
    while stack:
        nid = stack.pop()
        lb = _aabb_signed_distance(qlo, qhi, node_lo[nid], node_hi[nid])
        if lb > best[0]:
            if trace is not None:
                trace.append((nid, lb, best[0]))
            continue
        body = node_body[nid]
        if body >= 0:
            st, dist, wa, wb, axis = narrow(body)
            if st != PAIR_OK:
                return st, body, 0.0, None, None, None
            if dist < best[0] or (dist == best[0] and body < best[1]):
                best = (dist, int(body), wa, wb, axis)
            continue
        l, r = node_left[nid], node_right[nid]
        dl = _aabb_signed_distance(qlo, qhi, node_lo[l], node_hi[l])
        dr = _aabb_signed_distance(qlo, qhi, node_lo[r], node_hi[r])
        # push farther child first so the nearer one is explored first
        if dl <= dr:
            stack.append(r)
            stack.append(l)
        else:
            stack.append(l)
            stack.append(r)
    return PAIR_OK, best[1], best[0], best[2], best[3], best[4]


def self_broadphase_eval(
    parents, jtypes, jaxes, oq, ot, qmap,
    blink, btype, bparams, bq, bt,
    arm_idx, base_idx, base_q, base_t, qj, epsilon, want_grad,
):
    """One constraint per arm body: distance to the nearest base body.

    The AABB tree over the base group is rebuilt per call (bodies move with
    the configuration). Returns (h, grad, winner, status, wa, wb).
    """
    na = qj.shape[0]
    lq, lt = fk_links(parents, jtypes, jaxes, oq, ot, qmap, base_q, base_t, qj)
    wq, wt = _posed_bodies(blink, bq, bt, lq, lt)
    nb = base_idx.shape[0]
    los = np.empty((nb, 3))
    his = np.empty((nb, 3))
    for k in range(nb):
        i = base_idx[k]
        los[k], his[k] = aabb_of_posed(btype[i], bparams[i], wq[i], wt[i])
    tree = _build_aabb_tree(los, his)
    A = arm_idx.shape[0]
    h = np.zeros(A)
    grad = np.zeros((A, 6 + na))
    winner = np.full(A, -1, dtype=np.int32)
    status = np.zeros(A, dtype=np.int32)
    wa_arr = np.zeros((A, 3))
    wb_arr = np.zeros((A, 3))
    model = (parents, jtypes, jaxes, qmap)
    for a in range(A):
        ia = arm_idx[a]
        qlo, qhi = aabb_of_posed(btype[ia], bparams[ia], wq[ia], wt[ia])

        def narrow(b):
            ib = base_idx[b]
            st, dist, wa, wb, cons, axis, *_ = pair_distance_raw(
                btype[ia], bparams[ia], wq[ia], wt[ia],
                btype[ib], bparams[ib], wq[ib], wt[ib],
            )
            return st, dist, wa, wb, axis

        st, b, dist, wa, wb, axis = _nearest_in_tree(tree, qlo, qhi, narrow)
        if st != PAIR_OK:
            status[a] = st
            winner[a] = base_idx[b]
            continue
        h[a] = dist - epsilon[a]
        winner[a] = base_idx[b]
        wa_arr[a] = wa
        wb_arr[a] = wb
        if want_grad:
            grad[a] = _pair_grad_row(
                model, lq, lt, blink[ia], blink[base_idx[b]], wa, wb, axis, na
            )
    return h, grad, winner, status, wa_arr, wb_arr


# ---------------------------------------------------------------------------
# ESDF queries

def trilinear_batch(dist_flat, grad_flat, origin, res, dims, pts):
    """Trilinear distance/gradient queries; x-fastest flat lattices."""
    M = pts.shape[0]
    nx, ny, nz = int(dims[0]), int(dims[1]), int(dims[2])
    d_out = np.zeros(M)
    g_out = np.zeros((M, 3))
    inb = np.zeros(M, dtype=np.uint8)
    for m in range(M):
        u = (pts[m] - origin) / res - 0.5
        i0 = np.floor(u).astype(np.int64)
        f = u - i0
        if (
            i0[0] < 0 or i0[1] < 0 or i0[2] < 0
            or i0[0] + 1 >= nx or i0[1] + 1 >= ny or i0[2] + 1 >= nz
        ):
            continue
        inb[m] = 1
        acc_d = 0.0
        acc_g = np.zeros(3)
        for dz in (0, 1):
            wz = f[2] if dz else 1.0 - f[2]
            for dy in (0, 1):
                wy = f[1] if dy else 1.0 - f[1]
                for dx in (0, 1):
                    wx = f[0] if dx else 1.0 - f[0]
                    w = wx * wy * wz
                    idx = (i0[0] + dx) + nx * ((i0[1] + dy) + ny * (i0[2] + dz))
                    acc_d += w * dist_flat[idx]
                    acc_g += w * grad_flat[idx]
        d_out[m] = acc_d
        g_out[m] = acc_g
    return d_out, g_out, inb


def sphere_env_eval(
    parents, jtypes, jaxes, oq, ot, qmap,
    slink, scenters, sradii,
    dist_flat, grad_flat, origin, res, dims, cap,
    base_q, base_t, qj, want_grad,
):
    """Environment constraints h = SDF(center) - r for every robot sphere."""
    na = qj.shape[0]
    lq, lt = fk_links(parents, jtypes, jaxes, oq, ot, qmap, base_q, base_t, qj)
    S = slink.shape[0]
    centers = np.empty((S, 3))
    for k in range(S):
        i = slink[k]
        centers[k] = lt[i] + _quat_rot(lq[i], scenters[k])
    d, g, inb = trilinear_batch(dist_flat, grad_flat, origin, res, dims, centers)
    h = np.empty(S)
    grad = np.zeros((S, 6 + na))
    oob = np.zeros(S, dtype=np.uint8)
    for k in range(S):
        if not inb[k]:
            oob[k] = 1
            h[k] = cap - sradii[k]
            continue
        h[k] = d[k] - sradii[k]
        if want_grad:
            J = point_jacobian_arrays(
                parents, jtypes, jaxes, qmap, lq, lt, slink[k], centers[k], na
            )
            grad[k] = g[k] @ J
    return h, grad, oob


# ---------------------------------------------------------------------------
# static voxel-box tree (environment primitives baseline)

def build_voxel_tree(centers, half):
    """Static median-split tree over voxel boxes (cube half-size `half`)."""
    los = centers - half
    his = centers + half
    return _build_aabb_tree(los, his)


def voxel_nearest_eval(
    parents, jtypes, jaxes, oq, ot, qmap,
    blink, btype, bparams, bq, bt, body_sel,
    tree, centers, half,
    base_q, base_t, qj, epsilon, want_grad,
):
    """Nearest occupied-voxel box per selected robot body, tree-pruned."""
    na = qj.shape[0]
    lq, lt = fk_links(parents, jtypes, jaxes, oq, ot, qmap, base_q, base_t, qj)
    wq, wt = _posed_bodies(blink, bq, bt, lq, lt)
    box_params = np.array([half, half, half, 0.0])
    qid = np.array([1.0, 0.0, 0.0, 0.0])
    B = body_sel.shape[0]
    h = np.zeros(B)
    grad = np.zeros((B, 6 + na))
    winner = np.full(B, -1, dtype=np.int32)
    status = np.zeros(B, dtype=np.int32)
    model = (parents, jtypes, jaxes, qmap)
    for b in range(B):
        ib = body_sel[b]
        qlo, qhi = aabb_of_posed(btype[ib], bparams[ib], wq[ib], wt[ib])

        def narrow(v):
            st, dist, wa, wb, cons, axis, *_ = pair_distance_raw(
                btype[ib], bparams[ib], wq[ib], wt[ib],
                SHAPE_BOX, box_params, qid, centers[v],
            )
            return st, dist, wa, wb, axis

        st, v, dist, wa, wb, axis = _nearest_in_tree(tree, qlo, qhi, narrow)
        if st != PAIR_OK:
            status[b] = st
            winner[b] = v
            continue
        h[b] = dist - epsilon
        winner[b] = v
        if want_grad:
            # the voxel box is static: only the robot-side Jacobian appears
            JA = point_jacobian_arrays(
                parents, jtypes, jaxes, qmap, lq, lt, blink[ib], wa, na
            )
            grad[b] = axis @ JA
    return h, grad, winner, status


# ---------------------------------------------------------------------------
# integrator

def integrate_rk4(base_q, base_t, qj, u, dt):
    """One RK4 step of the kinematic flow map; quaternion renormalized."""
    v = u[0:3]
    w = u[3:6]
    vj = u[6:]

    def qdot(q):
        return 0.5 * _quat_mul(q, np.array([0.0, w[0], w[1], w[2]]))

    k1 = qdot(base_q)
    k2 = qdot(base_q + 0.5 * dt * k1)
    k3 = qdot(base_q + 0.5 * dt * k2)
    k4 = qdot(base_q + dt * k3)
    q = base_q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    q = q / np.linalg.norm(q)
    return q, base_t + dt * v, qj + dt * vj
