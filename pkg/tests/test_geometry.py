import numpy as np
import pytest

from wbmpc.geometry import (
    Aabb,
    Box,
    Capsule,
    Cylinder,
    DegenerateNormalError,
    Pose,
    Sphere,
    aabb_of,
    pair_distance,
    support_point,
)


def random_pose(rng, span=1.0):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(rng.uniform(-span, span, 3), q)


def random_primitive(rng):
    kind = rng.integers(0, 4)
    if kind == 0:
        return Sphere(rng.uniform(0.05, 0.4))
    if kind == 1:
        return Box(tuple(rng.uniform(0.05, 0.4, 3)))
    if kind == 2:
        return Cylinder(rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.4))
    return Capsule(rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.4))


def surface_samples(prim, pose, n, rng):
    """Points on the primitive surface via normalized support directions."""
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return np.array([support_point(prim, pose, d) for d in dirs])


# ---------------------------------------------------------------------------
# support_point


def test_support_sphere_unit_z():
    p = support_point(Sphere(1.0), Pose.identity(), (0, 0, 1))
    assert np.allclose(p, [0, 0, 1], atol=1e-12)


def test_support_box_vertex():
    p = support_point(Box((1, 2, 3)), Pose.identity(), (1, 1, 1))
    assert np.allclose(p, [1, 2, 3], atol=1e-12)


def test_support_capsule_cap_apex():
    p = support_point(Capsule(0.2, 0.5), Pose.identity(), (0, 0, 1))
    assert np.allclose(p, [0, 0, 0.7], atol=1e-12)


def test_support_degenerate_direction():
    with pytest.raises(ValueError, match="degenerate direction"):
        support_point(Sphere(1.0), Pose.identity(), (0, 0, 0))


def test_support_maximizes_dot():
    rng = np.random.default_rng(7)
    for _ in range(50):
        prim = random_primitive(rng)
        pose = random_pose(rng)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        s = support_point(prim, pose, d)
        pts = surface_samples(prim, pose, 200, rng)
        assert (pts @ d).max() <= s @ d + 1e-9


# ---------------------------------------------------------------------------
# pair_distance


def test_sphere_sphere_separated():
    r = pair_distance(
        Sphere(0.3), Pose(np.zeros(3)), Sphere(0.2), Pose(np.array([1.0, 0, 0]))
    )
    assert r.signed_distance == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(np.abs(r.normal), [1, 0, 0], atol=1e-12)


def test_sphere_sphere_overlap():
    r = pair_distance(
        Sphere(0.5), Pose(np.zeros(3)), Sphere(0.5), Pose(np.array([0.6, 0, 0]))
    )
    assert r.signed_distance == pytest.approx(-0.4, abs=1e-12)


def test_box_capsule_axis_gap():
    # Box face at x=0.5; capsule surface at x = 1.0 - 0.1 -> gap 0.4.
    r = pair_distance(
        Box((0.5, 0.5, 0.5)),
        Pose.identity(),
        Capsule(0.1, 0.3),
        Pose(np.array([1.0, 0.0, 0.0])),
    )
    assert r.signed_distance == pytest.approx(0.4, abs=1e-9)


def test_coincident_identical_shapes_degenerate():
    with pytest.raises(DegenerateNormalError):
        pair_distance(Sphere(0.5), Pose.identity(), Sphere(0.5), Pose.identity())
    with pytest.raises(DegenerateNormalError):
        pair_distance(
            Box((0.2, 0.2, 0.2)), Pose.identity(), Box((0.2, 0.2, 0.2)), Pose.identity()
        )


def test_euclidean_consistency_and_symmetry():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 100:
        a, b = random_primitive(rng), random_primitive(rng)
        pa, pb = random_pose(rng, 1.5), random_pose(rng, 1.5)
        try:
            r1 = pair_distance(a, pa, b, pb)
            r2 = pair_distance(b, pb, a, pa)
        except DegenerateNormalError:
            continue
        assert r1.signed_distance == pytest.approx(r2.signed_distance, abs=1e-9)
        assert np.allclose(r1.normal, -r2.normal, atol=1e-7)
        if r1.signed_distance > 0:
            gap = np.linalg.norm(r1.point_a - r1.point_b)
            assert abs(gap - r1.signed_distance) <= 1e-9
        checked += 1


def test_translation_invariance():
    rng = np.random.default_rng(13)
    for _ in range(50):
        a, b = random_primitive(rng), random_primitive(rng)
        pa, pb = random_pose(rng, 1.5), random_pose(rng, 1.5)
        shift = rng.uniform(-5, 5, 3)
        try:
            r1 = pair_distance(a, pa, b, pb)
            r2 = pair_distance(
                a,
                Pose(pa.translation + shift, pa.rotation),
                b,
                Pose(pb.translation + shift, pb.rotation),
            )
        except DegenerateNormalError:
            continue
        assert r1.signed_distance == pytest.approx(r2.signed_distance, abs=1e-9)


def test_witness_points_on_surfaces():
    # witness points must be achievable surface points: re-measure through them
    rng = np.random.default_rng(17)
    for _ in range(50):
        a, b = random_primitive(rng), random_primitive(rng)
        pa, pb = random_pose(rng, 1.6), random_pose(rng, 1.6)
        try:
            r = pair_distance(a, pa, b, pb)
        except DegenerateNormalError:
            continue
        if r.signed_distance <= 1e-6:
            continue
        # the witness gap can never beat the sampled support gap
        d = r.point_b - r.point_a
        d /= np.linalg.norm(d)
        sa = support_point(a, pa, d)
        sb = support_point(b, pb, -d)
        assert (r.point_a - sa) @ d <= 1e-7
        assert (sb - r.point_b) @ d <= 1e-7


def area_samples(prim, pose, n, rng):
    """Uniform-by-area surface point samples of a posed primitive."""
    if isinstance(prim, Sphere):
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        local = prim.radius * d
    elif isinstance(prim, Box):
        hx, hy, hz = prim.half_extents
        areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
        face = rng.choice(6, size=n, p=areas / areas.sum())
        u = rng.uniform(-1, 1, size=(n, 2))
        local = np.empty((n, 3))
        for f in range(6):
            m = face == f
            ax = f // 2
            sgn = 1.0 if f % 2 == 0 else -1.0
            oth = [i for i in range(3) if i != ax]
            h = (hx, hy, hz)
            local[m, ax] = sgn * h[ax]
            local[m, oth[0]] = u[m, 0] * h[oth[0]]
            local[m, oth[1]] = u[m, 1] * h[oth[1]]
    elif isinstance(prim, Cylinder):
        r, hl = prim.radius, prim.half_length
        a_side = 2 * np.pi * r * 2 * hl
        a_caps = 2 * np.pi * r * r
        side = rng.uniform(size=n) < a_side / (a_side + a_caps)
        theta = rng.uniform(0, 2 * np.pi, n)
        local = np.empty((n, 3))
        m = side
        local[m, 0] = r * np.cos(theta[m])
        local[m, 1] = r * np.sin(theta[m])
        local[m, 2] = rng.uniform(-hl, hl, m.sum())
        mc = ~side
        rad = r * np.sqrt(rng.uniform(size=mc.sum()))
        local[mc, 0] = rad * np.cos(theta[mc])
        local[mc, 1] = rad * np.sin(theta[mc])
        local[mc, 2] = np.where(rng.uniform(size=mc.sum()) < 0.5, hl, -hl)
    else:  # capsule
        r, hl = prim.radius, prim.half_length
        a_side = 2 * np.pi * r * 2 * hl
        a_caps = 4 * np.pi * r * r
        side = rng.uniform(size=n) < a_side / (a_side + a_caps)
        local = np.empty((n, 3))
        m = side
        theta = rng.uniform(0, 2 * np.pi, m.sum())
        local[m, 0] = r * np.cos(theta)
        local[m, 1] = r * np.sin(theta)
        local[m, 2] = rng.uniform(-hl, hl, m.sum())
        mc = ~side
        d = rng.normal(size=(mc.sum(), 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        local[mc] = r * d
        local[mc, 2] += np.where(d[:, 2] >= 0, hl, -hl)
    R = pose.rotation_matrix()
    return local @ R.T + pose.translation


def sampling_oracle(a, pa, b, pb, n, rng):
    """Min distance over n x n surface-sample pairs (separated case only).

    Prunes with a coarse upper bound plus AABB lower bounds before the exact
    nearest-pair query; the pruning is conservative so the result equals the
    full brute-force minimum.
    """
    from scipy.spatial import cKDTree

    sa = area_samples(a, pa, n, rng)
    sb = area_samples(b, pb, n, rng)
    ub = float(cKDTree(sb[::71]).query(sa[::71])[0].min())

    def prune(pts, other):
        lo, hi = other.min(axis=0), other.max(axis=0)
        gap = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        return pts[np.linalg.norm(gap, axis=1) <= ub + 1e-12]

    ca = prune(sa, sb)
    cb = prune(sb, sa)
    if len(ca) == 0 or len(cb) == 0:
        return ub
    d, _ = cKDTree(cb).query(ca, distance_upper_bound=ub + 1e-9)
    return float(min(ub, d.min()))


def test_sampling_oracle_random_pairs():
    # 200 random separated pairs against a 1e5-sample surface oracle
    rng = np.random.default_rng(23)
    checked = 0
    while checked < 200:
        a, b = random_primitive(rng), random_primitive(rng)
        pa, pb = random_pose(rng, 1.6), random_pose(rng, 1.6)
        try:
            r = pair_distance(a, pa, b, pb)
        except DegenerateNormalError:
            continue
        if r.signed_distance <= 1e-3:
            continue
        oracle = sampling_oracle(a, pa, b, pb, 100_000, rng)
        tol = max(1e-3, 0.01 * r.signed_distance)
        # the sampled oracle can only overestimate the true minimum
        assert r.signed_distance <= oracle + 1e-9
        assert oracle - r.signed_distance <= tol
        checked += 1


def test_box_capsule_dense_oracle():
    # frozen expected value 0.4 = 1.0 - 0.5 (box face) - 0.1 (capsule radius),
    # cross-checked against the dense sampling oracle
    rng = np.random.default_rng(29)
    a = Box((0.5, 0.5, 0.5))
    b = Capsule(0.1, 0.3)
    pa, pb = Pose.identity(), Pose(np.array([1.0, 0.0, 0.0]))
    r = pair_distance(a, pa, b, pb)
    oracle = sampling_oracle(a, pa, b, pb, 1_000_000, rng)
    assert abs(r.signed_distance - 0.4) <= 1e-9
    assert abs(oracle - 0.4) <= 1e-3


def support_min_depth_oracle(a, pa, b, pb, n=200_000):
    """Penetration depth = min over directions of the Minkowski support."""
    from wbmpc._core_py import _core_of, _quat_to_mat
    from wbmpc._core_py import SHAPE_BOX, SHAPE_CAPSULE, SHAPE_SPHERE

    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def batch(stype, params, R, t, ds):
        dl = ds @ R
        if stype == SHAPE_SPHERE:
            out = np.zeros((len(ds), 3))
        elif stype == SHAPE_CAPSULE:
            out = np.zeros((len(ds), 3))
            out[:, 2] = np.where(dl[:, 2] >= 0, params[1], -params[1])
        elif stype == SHAPE_BOX:
            out = np.where(dl >= 0, 1.0, -1.0) * params[:3]
        else:
            rho = np.hypot(dl[:, 0], dl[:, 1])
            out = np.zeros((len(ds), 3))
            m = rho >= 1e-12
            out[m, 0] = params[0] * dl[m, 0] / rho[m]
            out[m, 1] = params[0] * dl[m, 1] / rho[m]
            out[:, 2] = np.where(dl[:, 2] >= 0, params[1], -params[1])
        return out @ R.T + t

    RA, RB = _quat_to_mat(pa.rotation), _quat_to_mat(pb.rotation)
    ca, cpa, ma = _core_of(a.ptype, a.params)
    cb, cpb, mb = _core_of(b.ptype, b.params)
    sa = batch(ca, cpa, RA, pa.translation, dirs)
    sb = batch(cb, cpb, RB, pb.translation, -dirs)
    s = np.einsum("ij,ij->i", dirs, sa - sb) + ma + mb
    return float(s.min())


def test_penetration_depth_matches_support_oracle():
    # conservative results measure the capsule over-approximation, exact
    # results the original shapes; the oracle is limited by its angular
    # sampling resolution
    from wbmpc.geometry import _effective

    rng = np.random.default_rng(41)
    checked = 0
    while checked < 30:
        a, b = random_primitive(rng), random_primitive(rng)
        pa, pb = random_pose(rng, 0.3), random_pose(rng, 0.3)
        try:
            r = pair_distance(a, pa, b, pb)
        except DegenerateNormalError:
            continue
        if r.signed_distance >= -0.01:
            continue
        ea, eb = (_effective(a), _effective(b)) if r.conservative else (a, b)
        oracle = -support_min_depth_oracle(ea, pa, eb, pb)
        assert r.signed_distance == pytest.approx(oracle, abs=3e-3)
        checked += 1


def test_penetration_depth_spheres_in_boxes():
    # box-box penetration: two unit boxes overlapping by 0.3 along x
    r = pair_distance(
        Box((0.5, 0.5, 0.5)),
        Pose.identity(),
        Box((0.5, 0.5, 0.5)),
        Pose(np.array([0.7, 0.0, 0.0])),
    )
    assert r.signed_distance == pytest.approx(-0.3, abs=1e-7)


def test_sphere_box_penetration():
    # sphere center 0.3 inside the +x face of a unit box: depth = 0.2 + 0.25
    r = pair_distance(
        Sphere(0.25),
        Pose(np.array([0.3, 0.0, 0.0])),
        Box((0.5, 0.5, 0.5)),
        Pose.identity(),
    )
    assert r.signed_distance == pytest.approx(-(0.2 + 0.25), abs=1e-7)


def test_cylinder_penetration_conservative_flag():
    r = pair_distance(
        Cylinder(0.2, 0.3),
        Pose(np.array([0.0, 0.0, 0.25])),
        Box((0.5, 0.5, 0.1)),
        Pose.identity(),
    )
    assert r.signed_distance < 0
    assert r.conservative


def test_cylinder_separated_exact():
    # side by side along x: gap = 1.0 - 0.2 - 0.2
    r = pair_distance(
        Cylinder(0.2, 0.3),
        Pose.identity(),
        Cylinder(0.2, 0.3),
        Pose(np.array([1.0, 0.0, 0.0])),
    )
    assert r.signed_distance == pytest.approx(0.6, abs=1e-8)
    assert not r.conservative


# ---------------------------------------------------------------------------
# aabb_of


def test_aabb_sphere():
    bb = aabb_of(Sphere(1.0), Pose(np.array([2.0, 0, 0])))
    assert np.allclose(bb.min, [1, -1, -1], atol=1e-12)
    assert np.allclose(bb.max, [3, 1, 1], atol=1e-12)


def test_aabb_rotated_box_matches_corner_oracle():
    pose = Pose.from_xyz_rpy((0, 0, 0), (0, 0, np.pi / 4))
    bb = aabb_of(Box((1, 1, 1)), pose)
    corners = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    ).astype(float)
    world = np.array([pose.transform_point(c) for c in corners])
    assert np.allclose(bb.min, world.min(axis=0), atol=1e-9)
    assert np.allclose(bb.max, world.max(axis=0), atol=1e-9)
    assert np.allclose(bb.max, [np.sqrt(2), np.sqrt(2), 1.0], atol=1e-9)


def test_aabb_capsule():
    bb = aabb_of(Capsule(0.1, 0.5), Pose.identity())
    assert np.allclose(bb.min, [-0.1, -0.1, -0.6], atol=1e-12)


def test_aabb_contains_support_samples():
    rng = np.random.default_rng(31)
    for _ in range(60):
        prim = random_primitive(rng)
        pose = random_pose(rng)
        bb = aabb_of(prim, pose)
        pts = surface_samples(prim, pose, 100, rng)
        assert (pts >= bb.min - 1e-9).all()
        assert (pts <= bb.max + 1e-9).all()


# ---------------------------------------------------------------------------
# primitive validation


def test_dimension_validation():
    with pytest.raises(ValueError):
        Sphere(-1.0)
    with pytest.raises(ValueError):
        Box((1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        Cylinder(0.1, -0.1)


def test_pose_validation():
    with pytest.raises(ValueError):
        Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.1]))
