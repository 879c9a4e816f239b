"""Expanding polytope algorithm for penetration depth.

Runs on margin-reduced cores (points, segments, boxes -- cylinders are
replaced by capsule over-approximations before penetration is resolved, so
EPA only ever expands polytopal Minkowski differences and terminates
quickly). Cold path: only invoked when GJK reports intersecting cores.
"""

import numpy as np

from wbmpc._core_py import _affine_project, _quat_to_mat, _support_core_local

EPA_TOL = 1e-8
EPA_MAX_FACES = 255

_PAD_DIRS = [
    np.array([1.0, 0.0, 0.0]),
    np.array([-1.0, 0.0, 0.0]),
    np.array([0.0, 1.0, 0.0]),
    np.array([0.0, -1.0, 0.0]),
    np.array([0.0, 0.0, 1.0]),
    np.array([0.0, 0.0, -1.0]),
    np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0),
    np.array([-1.0, 1.0, -1.0]) / np.sqrt(3.0),
    np.array([1.0, -1.0, -1.0]) / np.sqrt(3.0),
    np.array([-1.0, -1.0, 1.0]) / np.sqrt(3.0),
]


class EpaFailure(Exception):
    pass


def _make_support(stA, pA, qA, tA, stB, pB, qB, tB):
    RA = _quat_to_mat(qA)
    RB = _quat_to_mat(qB)

    def support(d):
        sa = RA @ _support_core_local(stA, pA, RA.T @ d) + tA
        sb = RB @ _support_core_local(stB, pB, RB.T @ -d) + tB
        return sa - sb, sa, sb

    return support


def _tetra_volume(V, ids):
    a, b, c, d = (V[i] for i in ids)
    return float(np.dot(np.cross(b - a, c - a), d - a))


def _pick_tetra(V):
    n = len(V)
    for i in range(n - 3):
        for j in range(i + 1, n - 2):
            for k in range(j + 1, n - 1):
                for l in range(k + 1, n):
                    if abs(_tetra_volume(V, (i, j, k, l))) > 1e-18:
                        return [i, j, k, l]
    return None


def _clamped_triangle_bary(tri):
    """Closest-point barycentrics of the origin on a triangle (clamped)."""
    best = None
    best_d2 = np.inf
    for idx in ([0], [1], [2], [0, 1], [0, 2], [1, 2], [0, 1, 2]):
        lam = _affine_project(tri, idx)
        if lam is None or np.any(lam < -1e-12):
            continue
        lam = np.clip(lam, 0.0, None)
        lam = lam / lam.sum()
        v = lam @ tri[idx]
        d2 = float(v @ v)
        if d2 < best_d2:
            best_d2 = d2
            full = np.zeros(3)
            for l, i in zip(lam, idx):
                full[i] = l
            best = full
    return best


def _clamped_face_point(V, face):
    tri = np.array([V[i] for i in face])
    lam = _affine_project(tri, [0, 1, 2])
    if lam is None or np.any(lam < -1e-9):
        lam = _clamped_triangle_bary(tri)
    lam = np.clip(lam, 0.0, None)
    lam = lam / lam.sum()
    return lam, lam @ tri


def _finish(V, VA, VB, faces, fallback_nrm):
    # The plane distance of the closest face certifies the depth, but the
    # actual closest boundary point may sit on a neighbouring face's
    # triangle. Taking the global minimum of clamped projections keeps the
    # depth within the expansion tolerance AND makes the witnesses satisfy
    # pa - pb = depth * normal exactly.
    best = None
    for f in faces:
        lam, x = _clamped_face_point(V, f)
        d2 = float(x @ x)
        if best is None or d2 < best[0]:
            best = (d2, f, lam, x)
    d2, f, lam, x = best
    pa = sum(l * VA[i] for l, i in zip(lam, f))
    pb = sum(l * VB[i] for l, i in zip(lam, f))
    dn = float(np.sqrt(d2))
    if dn > 1e-12:
        return dn, x / dn, pa, pb
    return 0.0, fallback_nrm, pa, pb


def penetration(stA, pA, qA, tA, stB, pB, qB, tB, seed_m, seed_a, seed_b, nseed):
    """Penetration depth of intersecting cores.

    Returns (depth >= 0, outward_normal, wit_a, wit_b): translating body A by
    -depth*outward_normal separates the cores.
    """
    support = _make_support(stA, pA, qA, tA, stB, pB, qB, tB)
    V = [seed_m[i].copy() for i in range(nseed)]
    VA = [seed_a[i].copy() for i in range(nseed)]
    VB = [seed_b[i].copy() for i in range(nseed)]
    for d in _PAD_DIRS:
        if len(V) >= 4 and _pick_tetra(V) is not None:
            break
        w, wa, wb = support(d)
        if any(np.max(np.abs(w - v)) < 1e-12 for v in V):
            continue
        V.append(w)
        VA.append(wa)
        VB.append(wb)
    ids = _pick_tetra(V)
    if ids is None:
        raise EpaFailure("degenerate seed polytope")
    V = [V[i] for i in ids]
    VA = [VA[i] for i in ids]
    VB = [VB[i] for i in ids]

    faces = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    centroid = np.mean(V, axis=0)

    def face_data(f):
        a, b, c = V[f[0]], V[f[1]], V[f[2]]
        nrm = np.cross(b - a, c - a)
        ln = np.linalg.norm(nrm)
        if ln < 1e-18:
            return None
        nrm = nrm / ln
        if np.dot(nrm, a - centroid) < 0.0:
            nrm = -nrm
        return nrm, float(np.dot(nrm, a))

    data = {}
    for f in faces:
        fd = face_data(f)
        if fd is None:
            raise EpaFailure("degenerate seed face")
        data[f] = fd

    while True:
        f_best = min(faces, key=lambda f: max(data[f][1], 0.0))
        nrm, dist = data[f_best]
        dist = max(dist, 0.0)
        w, wa, wb = support(nrm)
        growth = float(np.dot(nrm, w)) - dist
        if growth < EPA_TOL or len(faces) >= EPA_MAX_FACES:
            return _finish(V, VA, VB, faces, nrm)
        visible = [f for f in faces if np.dot(data[f][0], w) > data[f][1] + 1e-12]
        if not visible:
            # numerically stuck: accept the current face
            return _finish(V, VA, VB, faces, nrm)
        vid = len(V)
        V.append(w)
        VA.append(wa)
        VB.append(wb)
        edge_count = {}
        for f in visible:
            for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                key = (min(e), max(e))
                edge_count[key] = edge_count.get(key, 0) + 1
        horizon = [e for e, c in edge_count.items() if c == 1]
        for f in visible:
            faces.remove(f)
            del data[f]
        for a, b in horizon:
            f = (a, b, vid)
            fd = face_data(f)
            if fd is None:
                continue
            faces.append(f)
            data[f] = fd
        if not faces:
            raise EpaFailure("polytope collapsed")
