"""Compiled vs pure kernel backends must agree on identical inputs."""

import numpy as np
import pytest

from wbmpc import _core_py as pure
from wbmpc.backend import compiled_backend

comp = compiled_backend()

pytestmark = pytest.mark.skipif(comp is None, reason="compiled core not built")


def rand_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def rand_shape(rng):
    st = int(rng.integers(0, 4))
    if st == pure.SHAPE_SPHERE:
        params = np.array([rng.uniform(0.05, 0.4), 0.0, 0.0, 0.0])
    elif st == pure.SHAPE_BOX:
        params = np.array([*rng.uniform(0.05, 0.4, 3), 0.0])
    else:
        params = np.array([rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.4), 0.0, 0.0])
    return st, params


def test_support_point_parity():
    rng = np.random.default_rng(3)
    for _ in range(500):
        st, params = rand_shape(rng)
        d = rng.normal(size=3)
        a = pure.support_point_local(st, params, d)
        b = comp.support_point_local(st, params, d)
        assert np.allclose(a, b, atol=1e-14)


def test_aabb_parity():
    rng = np.random.default_rng(5)
    for _ in range(500):
        st, params = rand_shape(rng)
        q = rand_quat(rng)
        t = rng.uniform(-1, 1, 3)
        lo1, hi1 = pure.aabb_of_posed(st, params, q, t)
        lo2, hi2 = comp.aabb_of_posed(st, params, q, t)
        assert np.allclose(lo1, lo2, atol=1e-14)
        assert np.allclose(hi1, hi2, atol=1e-14)


def resolve_epa(st_a, p_a, q_a, t_a, st_b, p_b, q_b, t_b, raw):
    """Full signed distance for a needs-EPA raw result (shared EPA path)."""
    from wbmpc import _epa

    ea = pure.SHAPE_CAPSULE if st_a == pure.SHAPE_CYLINDER else st_a
    eb = pure.SHAPE_CAPSULE if st_b == pure.SHAPE_CYLINDER else st_b
    core_a, cp_a, ma = pure._core_of(ea, p_a)
    core_b, cp_b, mb = pure._core_of(eb, p_b)
    depth, _, _, _ = _epa.penetration(
        core_a, cp_a, q_a, t_a, core_b, cp_b, q_b, t_b, raw[6], raw[7], raw[8], raw[9]
    )
    return -(depth + ma + mb)


def test_pair_distance_parity():
    rng = np.random.default_rng(7)
    n_ok = 0
    for _ in range(1500):
        stA, pA = rand_shape(rng)
        stB, pB = rand_shape(rng)
        qA, qB = rand_quat(rng), rand_quat(rng)
        tA = rng.uniform(-1, 1, 3)
        tB = rng.uniform(-1, 1, 3)
        ra = pure.pair_distance_raw(stA, pA, qA, tA, stB, pB, qB, tB)
        rb = comp.pair_distance_raw(stA, pA, qA, tA, stB, pB, qB, tB)
        assert ra[0] == rb[0]  # status
        assert ra[4] == rb[4]  # conservative flag
        if ra[0] == pure.PAIR_OK:
            # distances are tight; witness axes wobble at the GJK tolerance
            # square root on smooth surfaces
            assert ra[1] == pytest.approx(rb[1], abs=1e-9)
            assert np.allclose(ra[2], rb[2], atol=1e-6)
            assert np.allclose(ra[3], rb[3], atol=1e-6)
            assert np.allclose(ra[5], rb[5], atol=3e-5)
            n_ok += 1
        elif ra[0] == pure.PAIR_NEEDS_EPA:
            # terminal simplices may differ at float tie points; the resolved
            # penetration through the shared EPA must agree
            da = resolve_epa(stA, pA, qA, tA, stB, pB, qB, tB, ra)
            db = resolve_epa(stA, pA, qA, tA, stB, pB, qB, tB, rb)
            assert da == pytest.approx(db, abs=1e-6)
    assert n_ok > 500


def packed_chain(rng, na=4):
    """Random serial chain: floating root + na revolute joints."""
    L = na + 1
    parents = np.arange(-1, na, dtype=np.int32)
    jtypes = np.array([3] + [1] * na, dtype=np.int32)
    jaxes = np.zeros((L, 3))
    for i in range(1, L):
        a = rng.normal(size=3)
        jaxes[i] = a / np.linalg.norm(a)
    oq = np.zeros((L, 4))
    ot = np.zeros((L, 3))
    oq[:, 0] = 1.0
    for i in range(1, L):
        q = rand_quat(rng)
        oq[i] = q if q[0] >= 0 else -q
        ot[i] = rng.uniform(-0.3, 0.3, 3)
    qmap = np.array([-1] + list(range(na)), dtype=np.int32)
    return parents, jtypes, jaxes, oq, ot, qmap


def test_fk_and_jacobian_parity():
    rng = np.random.default_rng(11)
    for _ in range(100):
        model = packed_chain(rng)
        base_q = rand_quat(rng)
        base_t = rng.uniform(-1, 1, 3)
        qj = rng.uniform(-np.pi, np.pi, 4)
        lq1, lt1 = pure.fk_links(*model, base_q, base_t, qj)
        lq2, lt2 = comp.fk_links(*model, base_q, base_t, qj)
        assert np.allclose(lq1, lq2, atol=1e-13)
        assert np.allclose(lt1, lt2, atol=1e-13)
        parents, jtypes, jaxes, oq, ot, qmap = model
        link = int(rng.integers(0, 5))
        p = rng.uniform(-1, 1, 3)
        J1 = pure.point_jacobian_arrays(parents, jtypes, jaxes, qmap, lq1, lt1, link, p, 4)
        J2 = comp.point_jacobian_arrays(parents, jtypes, jaxes, qmap, lq2, lt2, link, p, 4)
        assert np.allclose(J1, J2, atol=1e-12)


def body_set(rng, nb, L):
    blink = rng.integers(0, L, nb).astype(np.int32)
    btype = np.empty(nb, dtype=np.int32)
    bparams = np.zeros((nb, 4))
    bq = np.zeros((nb, 4))
    bt = np.zeros((nb, 3))
    for k in range(nb):
        st, params = rand_shape(rng)
        btype[k] = st
        bparams[k] = params
        q = rand_quat(rng)
        bq[k] = q
        bt[k] = rng.uniform(-0.4, 0.4, 3)
    return blink, btype, bparams, bq, bt


def test_self_pairs_parity():
    rng = np.random.default_rng(13)
    for _ in range(60):
        model = packed_chain(rng)
        bodies = body_set(rng, 8, 5)
        pairs = np.array(
            [(i, j) for i in range(4) for j in range(4, 8)], dtype=np.int32
        )
        eps = np.full(len(pairs), 0.1)
        base_q = rand_quat(rng)
        base_t = rng.uniform(-1, 1, 3)
        qj = rng.uniform(-np.pi, np.pi, 4)
        out1 = pure.self_pairs_eval(*model, *bodies, pairs, base_q, base_t, qj, eps, 1)
        out2 = comp.self_pairs_eval(*model, *bodies, pairs, base_q, base_t, qj, eps, 1)
        assert np.array_equal(out1[2], out2[2])  # status
        ok = out1[2] == 0
        assert np.allclose(out1[0][ok], out2[0][ok], atol=1e-9)
        # gradient rows inherit the witness-axis tolerance times lever arms
        assert np.allclose(out1[1][ok], out2[1][ok], atol=2e-4)


def test_broadphase_parity():
    rng = np.random.default_rng(17)
    for _ in range(60):
        model = packed_chain(rng)
        bodies = body_set(rng, 9, 5)
        arm = np.array([0, 1, 2], dtype=np.int32)
        base = np.array([3, 4, 5, 6, 7, 8], dtype=np.int32)
        eps = np.full(3, 0.1)
        base_q = rand_quat(rng)
        base_t = rng.uniform(-1, 1, 3)
        qj = rng.uniform(-np.pi, np.pi, 4)
        out1 = pure.self_broadphase_eval(
            *model, *bodies, arm, base, base_q, base_t, qj, eps, 1
        )
        out2 = comp.self_broadphase_eval(
            *model, *bodies, arm, base, base_q, base_t, qj, eps, 1
        )
        assert np.array_equal(out1[3], out2[3])
        ok = out1[3] == 0
        assert np.array_equal(out1[2][ok], out2[2][ok])  # winner ids
        assert np.allclose(out1[0][ok], out2[0][ok], atol=1e-9)
        assert np.allclose(out1[1][ok], out2[1][ok], atol=2e-4)


def test_trilinear_parity():
    rng = np.random.default_rng(19)
    dims = np.array([6, 5, 7], dtype=np.int32)
    n = int(dims.prod())
    dist = rng.normal(size=n)
    grad = rng.normal(size=(n, 3))
    origin = np.array([-0.2, 0.1, 0.05])
    res = 0.1
    pts = rng.uniform(-0.4, 0.9, size=(300, 3))
    d1, g1, i1 = pure.trilinear_batch(dist, grad, origin, res, dims, pts)
    d2, g2, i2 = comp.trilinear_batch(dist, grad, origin, res, dims, pts)
    assert np.array_equal(i1, i2)
    assert np.allclose(d1, d2, atol=1e-13)
    assert np.allclose(g1, g2, atol=1e-13)


def test_integrate_parity():
    rng = np.random.default_rng(23)
    for _ in range(200):
        q = rand_quat(rng)
        t = rng.uniform(-1, 1, 3)
        qj = rng.uniform(-1, 1, 4)
        u = rng.uniform(-2, 2, 10)
        q1, t1, j1 = pure.integrate_rk4(q, t, qj, u, 0.05)
        q2, t2, j2 = comp.integrate_rk4(q, t, qj, u, 0.05)
        assert np.allclose(q1, q2, atol=1e-14)
        assert np.allclose(t1, t2, atol=1e-14)
        assert np.allclose(j1, j2, atol=1e-14)
